//! `kernelkit` command-line interface.
//!
//! Exit codes: 0 on success, 1 on invalid input or configuration, 2 when a
//! numerical step fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use kernelkit::dcor::{permutation_test, DcorInput, MIN_PERMUTATIONS};
use kernelkit::io::{self, Table};
use kernelkit::mmd::{pairwise_density_distances, DistanceMetric};
use kernelkit::parzen::{fit_parzen, Bandwidth};
use kernelkit::pipeline::{
    generate_synthetic, run_pipeline, write_synthetic, PipelineConfig, SyntheticSpec,
};
use kernelkit::rke::{embed_distances, RkeOptions};
use kernelkit::ssanova::{
    default_lambda_grid, fit_penalized, tune_lambda, Design, FitOptions, Loss, SsanovaModel,
    TermSpec,
};
use kernelkit::{KernelFamily, KernelSpec, Sample};

#[derive(Parser)]
#[command(
    name = "kernelkit",
    version,
    about = "Densities as attributes: Parzen estimates, MMD embeddings, RKE, SS-ANOVA and distance correlation"
)]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parzen window density estimate evaluated at query points.
    Density(DensityArgs),
    /// Pairwise MMD distances between per-subject samples.
    Embed(EmbedArgs),
    /// Regularized kernel estimation and pseudo-attributes from distances.
    Rke(RkeArgs),
    /// Distance correlation with a permutation test.
    Dcor(DcorArgs),
    /// Fit an SS-ANOVA model.
    Fit(FitArgs),
    /// Predict with a fitted model.
    Predict(PredictArgs),
    /// Run the end-to-end pipeline from a JSON config.
    Pipeline(PipelineArgs),
    /// Write a synthetic subject table and sample files.
    Synth(SynthArgs),
}

#[derive(Args)]
struct KernelArg {
    /// Kernel spec: a JSON file, or a family name such as `gaussian_rbf`.
    #[arg(long, default_value = "gaussian_rbf")]
    kernel: String,
    /// Scale parameter (sigma or halfwidth) when `--kernel` is a family name.
    #[arg(long)]
    scale: Option<f64>,
}

impl KernelArg {
    fn spec(&self) -> Result<KernelSpec> {
        let path = Path::new(&self.kernel);
        if path.is_file() {
            if self.scale.is_some() {
                bail!("--scale only applies when --kernel is a family name");
            }
            return Ok(io::read_json(path)?);
        }
        let family: KernelFamily = serde_json::from_value(serde_json::Value::String(
            self.kernel.clone(),
        ))
        .map_err(|_| {
            anyhow::anyhow!(
                "`{}` is neither a kernel spec file nor a kernel family",
                self.kernel
            )
        })?;
        Ok(KernelSpec::with_scale(family, self.scale.unwrap_or(1.0))?)
    }
}

#[derive(Args)]
struct DensityArgs {
    /// Sample CSV: one row per point, one column per coordinate.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    kernel: KernelArg,
    /// `silverman`, `lscv`, or a fixed positive bandwidth.
    #[arg(long, default_value = "silverman")]
    bandwidth: String,
    /// Query points CSV with the same number of columns as the sample.
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    RkhsNorm,
    RkhsNormSquared,
}

#[derive(Args)]
struct EmbedArgs {
    /// Directory with one `<label>.csv` sample per subject.
    #[arg(long)]
    samples: PathBuf,
    #[command(flatten)]
    kernel: KernelArg,
    #[arg(long, value_enum, default_value = "rkhs-norm")]
    metric: MetricArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum InputScale {
    Distance,
    Squared,
}

#[derive(Args)]
struct RkeArgs {
    /// Long-form CSV `label_i,label_j,distance`.
    #[arg(long)]
    distances: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    /// Whether the input holds distances (squared before solving) or
    /// squared distances.
    #[arg(long, value_enum, default_value = "squared")]
    input_scale: InputScale,
    #[arg(long, default_value_t = 0.95)]
    trace_fraction: f64,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Embedding CSV `label,z1..zr`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DcorType {
    /// Numeric rows, one per observation.
    Raw,
    /// Long-form distance CSV covering every pair.
    Dist,
}

#[derive(Args)]
struct DcorArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long, value_enum, default_value = "raw")]
    x_type: DcorType,
    #[arg(long, value_enum, default_value = "raw")]
    y_type: DcorType,
    #[arg(long, default_value_t = 999)]
    perms: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Gaussian,
    Bernoulli,
}

impl From<LossArg> for Loss {
    fn from(l: LossArg) -> Loss {
        match l {
            LossArg::Gaussian => Loss::Gaussian,
            LossArg::Bernoulli => Loss::Bernoulli,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Table CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// JSON list of term specs.
    #[arg(long)]
    terms: PathBuf,
    #[arg(long, value_enum, default_value = "gaussian")]
    loss: LossArg,
    /// `gcv` (tune over the default grid) or a fixed positive value.
    #[arg(long, default_value = "gcv", allow_negative_numbers = true)]
    lambda: String,
    /// Response column.
    #[arg(long, default_value = "y")]
    response: String,
    /// Label column used to match rows with `--pseudo`.
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Pseudo-attribute CSV `label,z1..zr`, required by density terms.
    #[arg(long)]
    pseudo: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    pseudo: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Also write each ANOVA component.
    #[arg(long)]
    components: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, required_unless_present = "print_schema")]
    config: Option<PathBuf>,
    /// Print the config JSON schema and exit.
    #[arg(long, conflicts_with = "config")]
    print_schema: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 12)]
    n_subjects: usize,
    #[arg(long, default_value_t = 50)]
    points_per_subject: usize,
    #[arg(long, default_value_t = 2.0)]
    effect_size: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn write_numeric_rows(path: &Path, header: Vec<String>, rows: Vec<Vec<f64>>) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.to_string()).collect())
        .collect();
    Ok(Table::write(path, &header, &rows)?)
}

fn density(a: DensityArgs) -> Result<()> {
    let (_, points) = io::read_numeric_csv(&a.input)?;
    let sample = Sample::new(points).with_context(|| format!("reading {}", a.input.display()))?;
    let bandwidth: Bandwidth = a.bandwidth.parse()?;
    let est = fit_parzen(sample, a.kernel.spec()?, bandwidth)?;
    let (_, queries) = io::read_numeric_csv(&a.query)?;
    let values = est.eval_many(&queries)?;
    let d = est.sample.dim();
    let header = (1..=d)
        .map(|k| format!("x{k}"))
        .chain(["density".to_string()])
        .collect();
    let rows = queries
        .into_iter()
        .zip(values)
        .map(|(mut q, v)| {
            q.push(v);
            q
        })
        .collect();
    write_numeric_rows(&a.out, header, rows)?;
    log::info!("bandwidth {}", est.bandwidth);
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<()> {
    let samples = io::read_samples_dir(&a.samples)?;
    let metric = match a.metric {
        MetricArg::RkhsNorm => DistanceMetric::RkhsNorm,
        MetricArg::RkhsNormSquared => DistanceMetric::RkhsNormSquared,
    };
    let d = pairwise_density_distances(&samples, &a.kernel.spec()?, metric)?;
    io::write_distances_csv(&a.out, &d)?;
    Ok(())
}

fn rke(a: RkeArgs) -> Result<()> {
    let mut d = io::read_distances_csv(&a.distances)?;
    if a.input_scale == InputScale::Distance {
        d = d.squared();
    }
    let opts = RkeOptions {
        max_iter: a.max_iter,
        tol: a.tol,
        seed: a.seed,
        ..RkeOptions::default()
    };
    let (pa, report) = embed_distances(&d, a.lambda, a.trace_fraction, &opts)?;
    io::write_embedding_csv(&a.out, d.labels(), &pa.rows())?;
    if let Some(p) = &a.report {
        io::write_json(p, &report)?;
    }
    if !report.converged {
        log::warn!(
            "stopped after {} iterations without meeting the tolerance",
            report.iterations
        );
    }
    Ok(())
}

fn dcor_input(path: &Path, kind: DcorType) -> Result<DcorInput> {
    Ok(match kind {
        DcorType::Raw => DcorInput::Raw(io::read_numeric_csv(path)?.1),
        DcorType::Dist => DcorInput::from_distance_matrix(&io::read_distances_csv(path)?)?,
    })
}

fn dcor(a: DcorArgs) -> Result<()> {
    if a.perms < MIN_PERMUTATIONS {
        bail!(kernelkit::Error::InvalidArgument(format!(
            "--perms must be at least {MIN_PERMUTATIONS}"
        )));
    }
    let x = dcor_input(&a.x, a.x_type)?;
    let y = dcor_input(&a.y, a.y_type)?;
    let result = permutation_test(&x, &y, a.perms, a.seed)?;
    io::write_json(&a.out, &result)?;
    Ok(())
}

/// Covariate design from a table, with pseudo rows matched by label.
fn design_from_table(
    table: &Table,
    covariates: &[String],
    pseudo: Option<&Path>,
    label_column: &str,
) -> Result<(Design, Option<Vec<String>>)> {
    let cols = covariates
        .iter()
        .map(|c| table.numeric_column(c))
        .collect::<kernelkit::Result<Vec<_>>>()?;
    let rows = (0..table.n())
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect();
    let labels = table.string_column(label_column).ok();
    let z = match pseudo {
        None => None,
        Some(p) => {
            let (zl, zr) = io::read_embedding_csv(p)?;
            match &labels {
                Some(labels) => Some(
                    labels
                        .iter()
                        .map(|l| {
                            zl.iter()
                                .position(|x| x == l)
                                .map(|k| zr[k].clone())
                                .ok_or_else(|| {
                                    anyhow::anyhow!("label `{l}` has no row in {}", p.display())
                                })
                        })
                        .collect::<Result<Vec<_>>>()?,
                ),
                None => {
                    if zr.len() != table.n() {
                        bail!(kernelkit::Error::DimensionMismatch {
                            expected: table.n(),
                            got: zr.len()
                        });
                    }
                    Some(zr)
                }
            }
        }
    };
    Ok((Design::new(covariates.to_vec(), rows, z)?, labels))
}

fn fit(a: FitArgs) -> Result<()> {
    let table = Table::read(&a.data)?;
    let terms: Vec<TermSpec> = io::read_json(&a.terms)?;
    let mut covariates: Vec<String> = Vec::new();
    for t in &terms {
        for v in &t.vars {
            if !covariates.contains(v) {
                covariates.push(v.clone());
            }
        }
    }
    let (design, _) = design_from_table(&table, &covariates, a.pseudo.as_deref(), &a.label_column)?;
    let y = table.numeric_column(&a.response)?;
    let loss: Loss = a.loss.into();
    let lambda = match a.lambda.as_str() {
        "gcv" | "tune" => {
            let r = tune_lambda(
                &design,
                &y,
                &terms,
                loss,
                &default_lambda_grid(),
                a.seed,
                &FitOptions::default(),
            )?;
            log::info!("selected lambda {} by {}", r.lambda, r.criterion);
            r.lambda
        }
        s => s.parse::<f64>().map_err(|_| {
            kernelkit::Error::InvalidArgument(format!(
                "--lambda must be `gcv` or a number, got `{s}`"
            ))
        })?,
    };
    let model = fit_penalized(&design, &y, &terms, lambda, loss)?;
    for w in &model.warnings {
        log::warn!("{w}");
    }
    io::write_json(&a.out, &model)?;
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let model: SsanovaModel = io::read_json(&a.model)?;
    let table = Table::read(&a.data)?;
    let (design, labels) = design_from_table(
        &table,
        &model.scaling.names,
        a.pseudo.as_deref(),
        &a.label_column,
    )?;
    if model.has_density_terms() && design.pseudo().is_none() {
        bail!(kernelkit::Error::InvalidArgument(
            "the model has density terms; pass --pseudo".into()
        ));
    }
    let comps = model.components_many(&design)?;
    let probs = match model.loss {
        Loss::Bernoulli => Some(model.response_many(&design)?),
        Loss::Gaussian => None,
    };
    let mut header: Vec<String> = Vec::new();
    if labels.is_some() {
        header.push(a.label_column.clone());
    }
    header.push("prediction".into());
    if probs.is_some() {
        header.push("probability".into());
    }
    if a.components {
        header.push("intercept".into());
        if let Some(c) = comps.first() {
            header.extend(c.terms.iter().map(|(n, _)| n.clone()));
        }
    }
    let rows: Vec<Vec<String>> = comps
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut row = Vec::new();
            if let Some(l) = &labels {
                row.push(l[i].clone());
            }
            row.push(c.total().to_string());
            if let Some(p) = &probs {
                row.push(p[i].to_string());
            }
            if a.components {
                row.push(c.intercept.to_string());
                row.extend(c.terms.iter().map(|(_, v)| v.to_string()));
            }
            row
        })
        .collect();
    Table::write(&a.out, &header, &rows)?;
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    if a.print_schema {
        print!("{}", kernelkit::pipeline::CONFIG_SCHEMA);
        return Ok(());
    }
    let path = a.config.expect("clap requires --config");
    let config = PipelineConfig::from_file(&path)?;
    let report = run_pipeline(&config)?;
    println!(
        "wrote {} files to {}",
        report.manifest.files.len() + 1,
        report.output_dir.display()
    );
    if let Some(d) = &report.dcor {
        println!(
            "dcor R^2 = {:.6}, p = {:.4}",
            d.r2,
            d.p_value.unwrap_or(f64::NAN)
        );
    }
    println!("rank {}, lambda {:e}", report.rank, report.lambda);
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_subjects: a.n_subjects,
        points_per_subject: a.points_per_subject,
        effect_size: a.effect_size,
        noise_sd: a.noise_sd,
    };
    let data = generate_synthetic(&spec, a.seed)?;
    let path = write_synthetic(&data, &a.out)?;
    println!("{}", path.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<kernelkit::Error>())
        .any(kernelkit::Error::is_numerical);
    if numerical {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .init();
    let result = match cli.command {
        Command::Density(a) => density(a),
        Command::Embed(a) => embed(a),
        Command::Rke(a) => rke(a),
        Command::Dcor(a) => dcor(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
