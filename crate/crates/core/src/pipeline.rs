//! Config-driven end-to-end runs: load subjects, embed their samples, solve
//! RKE, optionally test with distance correlation, and fit an SS-ANOVA model
//! with a density term.
//!
//! Every run writes its artifacts plus `manifest.json`, which lists each
//! file with its SHA-256 and the seeds used. Rerunning the same config
//! reproduces every file byte for byte.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dcor::{permutation_test, DcorInput, DcorResult};
use crate::io::{self, Table};
use crate::mmd::{pairwise_density_distances, DistanceMetric};
use crate::rke::{embed_distances, RkeOptions};
use crate::ssanova::{
    default_lambda_grid, fit_penalized_with, tune_lambda, Design, FitOptions, Loss, Measure,
    TermSpec,
};
use crate::{Error, KernelSpec, Result, Sample};

/// The published config schema.
pub const CONFIG_SCHEMA: &str = include_str!("../schema/pipeline_config.schema.json");

const ARTIFACTS: [&str; 6] = [
    "distances.csv",
    "embedding.csv",
    "rke_report.json",
    "dcor.json",
    "model.json",
    "manifest.json",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub subjects: SubjectsConfig,
    #[serde(default)]
    pub embed: EmbedConfig,
    pub rke: RkeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dcor: Option<DcorConfig>,
    pub fit: FitConfig,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSource {
    pub path: PathBuf,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    #[serde(default = "default_sample_column")]
    pub sample_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_column: Option<String>,
    pub covariates: Vec<String>,
}

fn default_label_column() -> String {
    "label".into()
}

fn default_sample_column() -> String {
    "sample".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    pub points_per_subject: usize,
    pub effect_size: f64,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
}

fn default_noise_sd() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedConfig {
    #[serde(default = "default_embed_kernel")]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub metric: DistanceMetric,
}

fn default_embed_kernel() -> KernelSpec {
    KernelSpec::gaussian(1.0).expect("valid default")
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            kernel: default_embed_kernel(),
            metric: DistanceMetric::RkhsNorm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RkeConfig {
    pub lambda: f64,
    #[serde(default = "default_trace_fraction")]
    pub trace_fraction: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
}

fn default_trace_fraction() -> f64 {
    0.95
}

fn default_max_iter() -> usize {
    RkeOptions::default().max_iter
}

fn default_tol() -> f64 {
    RkeOptions::default().tol
}

fn default_patience() -> usize {
    RkeOptions::default().patience
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcorConfig {
    #[serde(default = "default_permutations")]
    pub n_permutations: usize,
}

fn default_permutations() -> usize {
    999
}

/// A fixed λ or a tuning rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSetting {
    Value(f64),
    Rule(String),
}

impl Default for LambdaSetting {
    fn default() -> Self {
        LambdaSetting::Rule("gcv".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub terms: Vec<TermSpec>,
    #[serde(default = "default_loss")]
    pub loss: Loss,
    #[serde(default)]
    pub lambda: LambdaSetting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub measure: Measure,
}

fn default_loss() -> Loss {
    Loss::Gaussian
}

fn config_error(kind: &'static str, message: impl Into<String>) -> Error {
    Error::Config {
        kind,
        message: message.into(),
    }
}

fn schema_error_kind(e: &jsonschema::ValidationError<'_>) -> &'static str {
    use jsonschema::error::ValidationErrorKind as K;
    let path = e.instance_path().to_string();
    match e.kind() {
        K::AdditionalProperties { .. } => return "unknown_field",
        K::Required { .. } if path.is_empty() => return "missing_field",
        K::Type { .. } => return "wrong_type",
        K::Enum { .. } => return "invalid_enum",
        _ => {}
    }
    match path.as_str() {
        "/subjects" => "subject_source",
        "/rke/lambda" => "invalid_rke_lambda",
        "/rke/trace_fraction" => "invalid_trace_fraction",
        "/dcor/n_permutations" => "too_few_permutations",
        "/fit/terms" => "empty_terms",
        "/fit/lambda" | "/fit/lambda_grid" => "invalid_lambda_rule",
        "/subjects/synthetic/n_subjects" => "too_few_subjects",
        p if p.contains("/params/") => "invalid_kernel_param",
        _ => "schema_violation",
    }
}

/// Check a JSON document against [`CONFIG_SCHEMA`].
pub fn validate_against_schema(value: &serde_json::Value) -> Result<()> {
    let schema: serde_json::Value =
        serde_json::from_str(CONFIG_SCHEMA).expect("bundled schema is valid JSON");
    let validator = jsonschema::validator_for(&schema).expect("bundled schema compiles");
    let errors: Vec<_> = validator.iter_errors(value).collect();
    match errors.first() {
        None => Ok(()),
        Some(first) => {
            let details: Vec<String> = errors
                .iter()
                .map(|e| format!("{} (at `{}`)", e, e.instance_path()))
                .collect();
            Err(config_error(schema_error_kind(first), details.join("; ")))
        }
    }
}

impl PipelineConfig {
    /// Parse and fully validate a config; relative paths resolve against
    /// `base_dir`.
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| config_error("invalid_json", e.to_string()))?;
        validate_against_schema(&value)?;
        let mut cfg: PipelineConfig = serde_json::from_value(value)
            .map_err(|e| config_error("schema_violation", e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json_str(&text, base)
    }

    /// Checks beyond the schema: capability and cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        if !self.embed.kernel.is_universal() {
            return Err(config_error(
                "kernel_not_universal",
                format!(
                    "embedding kernel `{}` is not universal; use gaussian_rbf or laplacian_rbf",
                    self.embed.kernel.family().name()
                ),
            ));
        }
        let covariates = self.covariate_names();
        for term in &self.fit.terms {
            if let Some(v) = term.vars.iter().find(|v| !covariates.contains(v)) {
                return Err(config_error(
                    "unknown_variable",
                    format!(
                        "term `{}` uses `{v}`, not among covariates {covariates:?}",
                        term.name()
                    ),
                ));
            }
        }
        crate::ssanova::validate_term_list(&self.fit.terms)
            .map_err(|e| config_error("invalid_terms", e.to_string()))?;
        if let LambdaSetting::Rule(rule) = &self.fit.lambda {
            if rule != "gcv" && rule != "tune" {
                return Err(config_error(
                    "invalid_lambda_rule",
                    format!("unknown rule `{rule}`"),
                ));
            }
        }
        if self.fit.loss == Loss::Bernoulli && self.subjects.synthetic.is_some() {
            return Err(config_error(
                "incompatible_loss",
                "synthetic subjects have a continuous response; use gaussian loss",
            ));
        }
        Ok(())
    }

    pub fn covariate_names(&self) -> Vec<String> {
        match (&self.subjects.table, &self.subjects.synthetic) {
            (Some(t), _) => t.covariates.clone(),
            _ => vec!["x".to_string()],
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

/// Per-stage seed: the first 8 bytes of `SHA-256(seed ‖ stage)`.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Subjects with scalar attributes, optional sample files and response.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectTable {
    pub labels: Vec<String>,
    pub covariate_names: Vec<String>,
    pub covariates: Vec<Vec<f64>>,
    pub sample_paths: Option<Vec<PathBuf>>,
    pub response: Option<Vec<f64>>,
}

impl SubjectTable {
    pub fn read(source: &TableSource, base_dir: &Path) -> Result<Self> {
        let path = if source.path.is_absolute() {
            source.path.clone()
        } else {
            base_dir.join(&source.path)
        };
        let table = Table::read(&path)?;
        let labels = table.string_column(&source.label_column)?;
        let cols = source
            .covariates
            .iter()
            .map(|c| table.numeric_column(c))
            .collect::<Result<Vec<_>>>()?;
        let covariates = (0..table.n())
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect();
        let dir = path.parent().unwrap_or(Path::new("."));
        let sample_paths = table
            .string_column(&source.sample_column)?
            .into_iter()
            .map(|p| dir.join(p))
            .collect();
        let response = source
            .response_column
            .as_ref()
            .map(|c| table.numeric_column(c))
            .transpose()?;
        let t = SubjectTable {
            labels,
            covariate_names: source.covariates.clone(),
            covariates,
            sample_paths: Some(sample_paths),
            response,
        };
        t.check_labels()?;
        Ok(t)
    }

    fn check_labels(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let dups: Vec<String> = self
            .labels
            .iter()
            .filter(|l| !seen.insert(*l))
            .cloned()
            .collect();
        if dups.is_empty() {
            Ok(())
        } else {
            Err(Error::Stage {
                stage: "load",
                labels: dups,
                source: Box::new(Error::InvalidArgument("duplicate subject labels".into())),
            })
        }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Read every subject's sample file; a failure names the subject.
    pub fn load_samples(&self) -> Result<Vec<Sample>> {
        let paths = self.sample_paths.as_ref().ok_or_else(|| Error::Stage {
            stage: "load",
            labels: Vec::new(),
            source: Box::new(Error::InvalidArgument(
                "subject table has no sample files".into(),
            )),
        })?;
        self.labels
            .iter()
            .zip(paths)
            .map(|(label, p)| {
                if !p.is_file() {
                    return Err(Error::Stage {
                        stage: "load",
                        labels: vec![label.clone()],
                        source: Box::new(Error::InvalidArgument(format!(
                            "missing sample file {}",
                            p.display()
                        ))),
                    });
                }
                io::read_sample_csv(p)
                    .map(|s| s.with_label(label.clone()))
                    .map_err(|e| Error::Stage {
                        stage: "load",
                        labels: vec![label.clone()],
                        source: Box::new(e),
                    })
            })
            .collect()
    }

    /// Design with the given pseudo-attribute rows.
    pub fn design(&self, pseudo: Option<Vec<Vec<f64>>>) -> Result<Design> {
        Design::new(
            self.covariate_names.clone(),
            self.covariates.clone(),
            pseudo,
        )
    }
}

/// Synthetic subjects and their in-memory samples.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub table: SubjectTable,
    pub samples: Vec<Sample>,
    pub groups: Vec<usize>,
}

/// Subjects alternate between two latent groups (`g = i mod 2`). Subject
/// samples are `N(effect·g, 1)`, the covariate `x` is `U(0, 1)` and the
/// response is `effect·g + noise_sd·N(0, 1)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    if spec.n_subjects < 4 {
        return Err(Error::InvalidArgument(format!(
            "need at least 4 subjects, got {}",
            spec.n_subjects
        )));
    }
    if spec.points_per_subject < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 points per subject".into(),
        ));
    }
    if !(spec.effect_size.is_finite() && spec.effect_size >= 0.0)
        || !(spec.noise_sd.is_finite() && spec.noise_sd > 0.0)
    {
        return Err(Error::InvalidArgument(
            "effect_size must be >= 0 and noise_sd > 0".into(),
        ));
    }
    let width = spec.n_subjects.to_string().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Vec::with_capacity(spec.n_subjects);
    let mut covariates = Vec::with_capacity(spec.n_subjects);
    let mut response = Vec::with_capacity(spec.n_subjects);
    let mut samples = Vec::with_capacity(spec.n_subjects);
    let mut groups = Vec::with_capacity(spec.n_subjects);
    for i in 0..spec.n_subjects {
        let g = i % 2;
        let label = format!("s{:0width$}", i + 1);
        let mean = spec.effect_size * g as f64;
        let points: Vec<Vec<f64>> = (0..spec.points_per_subject)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                vec![mean + z]
            })
            .collect();
        let x: f64 = rng.random();
        let noise: f64 = StandardNormal.sample(&mut rng);
        samples.push(Sample::new(points)?.with_label(label.clone()));
        labels.push(label);
        covariates.push(vec![x]);
        response.push(mean + spec.noise_sd * noise);
        groups.push(g);
    }
    Ok(SyntheticData {
        table: SubjectTable {
            labels,
            covariate_names: vec!["x".into()],
            covariates,
            sample_paths: None,
            response: Some(response),
        },
        samples,
        groups,
    })
}

/// Write `subjects.csv` and `samples/<label>.csv` under `dir`; returns the
/// table path. The table columns are `label,sample,x,y,group`.
pub fn write_synthetic(data: &SyntheticData, dir: &Path) -> Result<PathBuf> {
    let sample_dir = dir.join("samples");
    fs::create_dir_all(&sample_dir).map_err(|e| Error::io(&sample_dir, e))?;
    let response = data
        .table
        .response
        .as_ref()
        .expect("synthetic data has a response");
    let mut rows = Vec::with_capacity(data.table.n());
    for (i, (label, sample)) in data.table.labels.iter().zip(&data.samples).enumerate() {
        let rel = format!("samples/{label}.csv");
        io::write_sample_csv(dir.join(&rel), sample)?;
        rows.push(vec![
            label.clone(),
            rel,
            data.table.covariates[i][0].to_string(),
            response[i].to_string(),
            data.groups[i].to_string(),
        ]);
    }
    let header: Vec<String> = ["label", "sample", "x", "y", "group"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let path = dir.join("subjects.csv");
    Table::write(&path, &header, &rows)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub config_sha256: String,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn manifest_entry(dir: &Path, name: &str) -> Result<ManifestEntry> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(ManifestEntry {
        path: name.to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub labels: Vec<String>,
    pub rank: usize,
    pub lambda: f64,
    pub dcor: Option<DcorResult>,
}

fn in_stage<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        other => Error::Stage {
            stage,
            labels: Vec::new(),
            source: Box::new(other),
        },
    })
}

fn check_sample_dims(samples: &[Sample]) -> Result<()> {
    let d = samples.first().map_or(0, Sample::dim);
    let bad: Vec<String> = samples
        .iter()
        .filter(|s| s.dim() != d)
        .map(|s| s.label().unwrap_or("?").to_string())
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Stage {
            stage: "embed",
            labels: bad,
            source: Box::new(Error::InvalidArgument(format!(
                "samples must all have dimension {d}"
            ))),
        })
    }
}

/// Run every stage and write the artifacts and manifest.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    config.validate()?;
    let out = config.resolve(&config.output_dir);
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut stage_seeds = BTreeMap::new();
    for stage in ["synthetic", "rke", "dcor", "fit"] {
        stage_seeds.insert(stage.to_string(), stage_seed(config.seed, stage));
    }
    let mut written: Vec<&str> = Vec::new();

    let (table, samples) = match (&config.subjects.table, &config.subjects.synthetic) {
        (Some(src), None) => {
            let t = SubjectTable::read(src, &config.base_dir)?;
            let s = t.load_samples()?;
            (t, s)
        }
        (None, Some(spec)) => {
            let data = in_stage(
                "synthetic",
                generate_synthetic(spec, stage_seeds["synthetic"]),
            )?;
            (data.table, data.samples)
        }
        _ => {
            return Err(config_error(
                "subject_source",
                "exactly one of `table` or `synthetic` is required",
            ))
        }
    };
    log::info!("loaded {} subjects", table.n());

    check_sample_dims(&samples)?;
    let distances = in_stage(
        "embed",
        pairwise_density_distances(&samples, &config.embed.kernel, config.embed.metric),
    )?;
    io::write_distances_csv(out.join("distances.csv"), &distances)?;
    written.push("distances.csv");

    let squared = match config.embed.metric {
        DistanceMetric::RkhsNorm => distances.squared(),
        DistanceMetric::RkhsNormSquared => distances.clone(),
    };
    let opts = RkeOptions {
        max_iter: config.rke.max_iter,
        tol: config.rke.tol,
        patience: config.rke.patience,
        seed: stage_seeds["rke"],
    };
    let (pseudo, report) = in_stage(
        "rke",
        embed_distances(
            &squared,
            config.rke.lambda,
            config.rke.trace_fraction,
            &opts,
        ),
    )?;
    if !report.converged {
        log::warn!(
            "rke stopped after {} iterations without meeting the tolerance",
            report.iterations
        );
    }
    let z = pseudo.rows();
    io::write_embedding_csv(out.join("embedding.csv"), &table.labels, &z)?;
    io::write_json(out.join("rke_report.json"), &report)?;
    written.extend(["embedding.csv", "rke_report.json"]);

    let response = table.response.clone().ok_or_else(|| Error::Stage {
        stage: "fit",
        labels: Vec::new(),
        source: Box::new(Error::InvalidArgument("no response column".into())),
    })?;

    let dcor = match &config.dcor {
        None => None,
        Some(dc) => {
            let x = in_stage("dcor", DcorInput::from_distance_matrix(&distances))?;
            let y = DcorInput::univariate(&response);
            let result = in_stage(
                "dcor",
                permutation_test(&x, &y, dc.n_permutations, stage_seeds["dcor"]),
            )?;
            io::write_json(out.join("dcor.json"), &result)?;
            written.push("dcor.json");
            Some(result)
        }
    };

    let design = in_stage("fit", table.design(Some(z)))?;
    let fit_opts = FitOptions {
        measure: config.fit.measure,
        ..FitOptions::default()
    };
    let lambda = match &config.fit.lambda {
        LambdaSetting::Value(l) => *l,
        LambdaSetting::Rule(_) => {
            let grid = config
                .fit
                .lambda_grid
                .clone()
                .unwrap_or_else(default_lambda_grid);
            in_stage(
                "fit",
                tune_lambda(
                    &design,
                    &response,
                    &config.fit.terms,
                    config.fit.loss,
                    &grid,
                    stage_seeds["fit"],
                    &fit_opts,
                ),
            )?
            .lambda
        }
    };
    let model = in_stage(
        "fit",
        fit_penalized_with(
            &design,
            &response,
            &config.fit.terms,
            lambda,
            config.fit.loss,
            &fit_opts,
        ),
    )?;
    io::write_json(out.join("model.json"), &model)?;
    written.push("model.json");

    // Drop artifacts of earlier runs that this run did not produce.
    for name in ARTIFACTS {
        let p = out.join(name);
        if !written.contains(&name) && name != "manifest.json" && p.is_file() {
            log::info!("removing stale {}", p.display());
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }

    let config_json = serde_json::to_string(config).expect("config serializes");
    let manifest = Manifest {
        tool: format!("kernelkit {}", env!("CARGO_PKG_VERSION")),
        seed: config.seed,
        stage_seeds,
        config_sha256: sha256_hex(config_json.as_bytes()),
        files: written
            .iter()
            .map(|name| manifest_entry(&out, name))
            .collect::<Result<_>>()?,
    };
    io::write_json(out.join("manifest.json"), &manifest)?;

    Ok(RunReport {
        output_dir: out,
        manifest,
        labels: table.labels,
        rank: pseudo.rank,
        lambda,
        dcor,
    })
}
