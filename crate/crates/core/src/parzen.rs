//! Parzen window density estimates
//! `f_n(x) = (1 / (n h^d)) Σ_j K((x − X_j) / h)`.

use serde::{Deserialize, Serialize};

use crate::kernel::KernelSpec;
use crate::{par, Error, Result};

/// One subject's sample: a nonempty list of finite points of equal dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    points: Vec<Vec<f64>>,
    label: Option<String>,
}

impl Sample {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let d = points
            .first()
            .ok_or(Error::Empty("sample has no points"))?
            .len();
        if d == 0 {
            return Err(Error::InvalidSample("points have dimension 0".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::InvalidSample(format!(
                    "point {i} has dimension {}, expected {d}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSample(format!(
                    "point {i} has a non-finite coordinate"
                )));
            }
        }
        Ok(Sample {
            points,
            label: None,
        })
    }

    pub fn univariate(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    fn coordinate(&self, k: usize) -> Vec<f64> {
        self.points.iter().map(|p| p[k]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `0.9 · min(sd, IQR/1.34) · n^(−1/5)`.
    Silverman,
    /// Least-squares cross-validation over a 25-point log grid around the
    /// Silverman bandwidth.
    FixedGridLscv,
}

impl std::str::FromStr for BandwidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "silverman" => Ok(BandwidthRule::Silverman),
            "lscv" | "fixed_grid_lscv" => Ok(BandwidthRule::FixedGridLscv),
            other => Err(Error::InvalidArgument(format!(
                "unknown bandwidth rule `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    Rule(BandwidthRule),
}

impl Default for Bandwidth {
    fn default() -> Self {
        Bandwidth::Rule(BandwidthRule::Silverman)
    }
}

impl std::str::FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<f64>() {
            Ok(h) => Ok(Bandwidth::Fixed(h)),
            Err(_) => Ok(Bandwidth::Rule(s.parse()?)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DensityEstimate {
    pub sample: Sample,
    pub kernel: KernelSpec,
    pub bandwidth: f64,
}

pub fn fit_parzen(
    sample: Sample,
    kernel: KernelSpec,
    bandwidth: Bandwidth,
) -> Result<DensityEstimate> {
    kernel.require_density()?;
    let h = match bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Rule(rule) => select_bandwidth(&sample, &kernel, rule)?,
    };
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be finite and > 0, got {h}"
        )));
    }
    Ok(DensityEstimate {
        sample,
        kernel,
        bandwidth: h,
    })
}

impl DensityEstimate {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let d = self.sample.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let h = self.bandwidth;
        let n = self.sample.len() as f64;
        let sum: f64 = self
            .sample
            .points()
            .iter()
            .map(|p| {
                x.iter()
                    .zip(p)
                    .map(|(xi, pi)| self.kernel.density_1d((xi - pi) / h))
                    .product::<f64>()
            })
            .sum();
        sum / (n * h.powi(self.sample.dim() as i32))
    }

    /// Evaluate at many query points, in parallel when enabled.
    pub fn eval_many(&self, queries: &[Vec<f64>]) -> Result<Vec<f64>> {
        let d = self.sample.dim();
        if let Some(q) = queries.iter().find(|q| q.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: q.len(),
            });
        }
        Ok(par::map_slice(queries, |q| self.eval_unchecked(q)))
    }
}

pub fn eval_density(est: &DensityEstimate, x: &[f64]) -> Result<f64> {
    est.eval(x)
}

/// Linear-interpolation quantile of sorted data (R type 7).
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn silverman_1d(values: &[f64]) -> Option<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = match (sd.min(iqr / 1.34), sd) {
        (s, _) if s > 0.0 => s,
        // Heavy ties can zero the IQR while the sd is positive.
        (_, sd) if sd > 0.0 => sd,
        _ => return None,
    };
    Some(0.9 * spread * n.powf(-0.2))
}

/// Silverman's rule. For multivariate samples the per-coordinate values are
/// averaged over the coordinates that have spread.
pub fn silverman_bandwidth(sample: &Sample) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::InvalidArgument(
            "silverman bandwidth needs at least 2 points".into(),
        ));
    }
    let per_coord: Vec<f64> = (0..sample.dim())
        .filter_map(|k| silverman_1d(&sample.coordinate(k)))
        .collect();
    if per_coord.is_empty() {
        return Err(Error::DegenerateSample);
    }
    Ok(per_coord.iter().sum::<f64>() / per_coord.len() as f64)
}

/// Least-squares cross-validation score
/// `∫ f̂² − (2/n) Σ_i f̂_{−i}(X_i)`.
pub fn lscv_score(sample: &Sample, kernel: &KernelSpec, h: f64) -> f64 {
    let pts = sample.points();
    let n = pts.len();
    let d = sample.dim() as i32;
    let mut conv_sum = 0.0;
    let mut loo_sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (mut conv, mut k) = (1.0, 1.0);
            for (a, b) in pts[i].iter().zip(&pts[j]) {
                let u = (a - b) / h;
                conv *= kernel.density_self_convolution(u);
                k *= kernel.density_1d(u);
            }
            conv_sum += conv;
            if i != j {
                loo_sum += k;
            }
        }
    }
    let nf = n as f64;
    let hd = h.powi(d);
    conv_sum / (nf * nf * hd) - 2.0 * loo_sum / (nf * (nf - 1.0) * hd)
}

pub const LSCV_GRID_POINTS: usize = 25;

pub fn select_bandwidth(sample: &Sample, kernel: &KernelSpec, rule: BandwidthRule) -> Result<f64> {
    kernel.require_density()?;
    let h_silverman = silverman_bandwidth(sample)?;
    match rule {
        BandwidthRule::Silverman => Ok(h_silverman),
        BandwidthRule::FixedGridLscv => {
            if sample.len() < 3 {
                return Err(Error::InvalidArgument(
                    "lscv bandwidth needs at least 3 points".into(),
                ));
            }
            let lo = (h_silverman / 10.0).ln();
            let hi = (h_silverman * 10.0).ln();
            let grid: Vec<f64> = (0..LSCV_GRID_POINTS)
                .map(|k| (lo + (hi - lo) * k as f64 / (LSCV_GRID_POINTS - 1) as f64).exp())
                .collect();
            let scores = par::map_slice(&grid, |&h| lscv_score(sample, kernel, h));
            let best = scores
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k)
                .expect("grid is nonempty");
            Ok(grid[best])
        }
    }
}
