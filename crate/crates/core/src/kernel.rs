//! Kernel families used both as Parzen density kernels and as positive
//! definite reproducing kernels.
//!
//! A density kernel `K(y)` is a univariate probability density with a scale
//! parameter; multivariate density kernels are coordinate-wise products.
//! A positive definite kernel `K(s, t)` is normalized so that `K(s, s) = 1`.
//!
//! | family         | scale param | density | pos. definite | universal |
//! |----------------|-------------|---------|---------------|-----------|
//! | `gaussian_rbf` | `sigma`     | yes     | yes           | yes       |
//! | `laplacian_rbf`| `sigma`     | yes     | yes           | yes       |
//! | `triangular`   | `halfwidth` | yes     | yes           | no        |
//! | `uniform_box`  | `halfwidth` | yes     | no            | no        |
//! | `epanechnikov` | `halfwidth` | yes     | no            | no        |

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{linalg, par, quad, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    GaussianRbf,
    LaplacianRbf,
    UniformBox,
    Triangular,
    Epanechnikov,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 5] = [
        KernelFamily::GaussianRbf,
        KernelFamily::LaplacianRbf,
        KernelFamily::UniformBox,
        KernelFamily::Triangular,
        KernelFamily::Epanechnikov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::GaussianRbf => "gaussian_rbf",
            KernelFamily::LaplacianRbf => "laplacian_rbf",
            KernelFamily::UniformBox => "uniform_box",
            KernelFamily::Triangular => "triangular",
            KernelFamily::Epanechnikov => "epanechnikov",
        }
    }

    /// Name of the single scale parameter.
    pub fn scale_param(self) -> &'static str {
        match self {
            KernelFamily::GaussianRbf | KernelFamily::LaplacianRbf => "sigma",
            _ => "halfwidth",
        }
    }

    pub fn is_density_kernel(self) -> bool {
        true
    }

    pub fn is_positive_definite(self) -> bool {
        matches!(
            self,
            KernelFamily::GaussianRbf | KernelFamily::LaplacianRbf | KernelFamily::Triangular
        )
    }

    /// Whitelisted as universal; not verified numerically.
    pub fn is_universal(self) -> bool {
        matches!(self, KernelFamily::GaussianRbf | KernelFamily::LaplacianRbf)
    }

    /// Radial basis functions depend on the points only through `‖s − t‖`.
    pub fn is_rbf(self) -> bool {
        matches!(self, KernelFamily::GaussianRbf | KernelFamily::LaplacianRbf)
    }
}

#[derive(Deserialize)]
struct RawKernelSpec {
    family: KernelFamily,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

/// A kernel family with its parameters.
///
/// Serializes as `{"family": "gaussian_rbf", "params": {"sigma": 1.0}}`.
/// A missing scale parameter defaults to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec")]
pub struct KernelSpec {
    family: KernelFamily,
    params: BTreeMap<String, f64>,
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        KernelSpec::new(raw.family, raw.params)
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily, mut params: BTreeMap<String, f64>) -> Result<Self> {
        let key = family.scale_param();
        if let Some(unknown) = params.keys().find(|k| k.as_str() != key) {
            return Err(Error::InvalidKernel(format!(
                "unknown parameter `{unknown}` for {}",
                family.name()
            )));
        }
        let scale = *params.entry(key.to_string()).or_insert(1.0);
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "{key} must be finite and > 0, got {scale}"
            )));
        }
        Ok(KernelSpec { family, params })
    }

    pub fn with_scale(family: KernelFamily, scale: f64) -> Result<Self> {
        let mut params = BTreeMap::new();
        params.insert(family.scale_param().to_string(), scale);
        Self::new(family, params)
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::with_scale(KernelFamily::GaussianRbf, sigma)
    }

    pub fn laplacian(sigma: f64) -> Result<Self> {
        Self::with_scale(KernelFamily::LaplacianRbf, sigma)
    }

    pub fn uniform_box(halfwidth: f64) -> Result<Self> {
        Self::with_scale(KernelFamily::UniformBox, halfwidth)
    }

    pub fn triangular(halfwidth: f64) -> Result<Self> {
        Self::with_scale(KernelFamily::Triangular, halfwidth)
    }

    pub fn epanechnikov(halfwidth: f64) -> Result<Self> {
        Self::with_scale(KernelFamily::Epanechnikov, halfwidth)
    }

    pub fn default_for(family: KernelFamily) -> Self {
        Self::with_scale(family, 1.0).expect("unit scale is valid")
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn scale(&self) -> f64 {
        self.params[self.family.scale_param()]
    }

    pub fn is_density_kernel(&self) -> bool {
        self.family.is_density_kernel()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.family.is_positive_definite()
    }

    pub fn is_universal(&self) -> bool {
        self.family.is_universal()
    }

    pub fn require_density(&self) -> Result<()> {
        if self.is_density_kernel() {
            Ok(())
        } else {
            Err(Error::KernelCapability {
                family: self.family.name(),
                capability: "density kernel",
            })
        }
    }

    pub fn require_positive_definite(&self) -> Result<()> {
        if self.is_positive_definite() {
            Ok(())
        } else {
            Err(Error::KernelCapability {
                family: self.family.name(),
                capability: "positive definite",
            })
        }
    }

    pub fn require_universal(&self) -> Result<()> {
        self.require_positive_definite()?;
        if self.is_universal() {
            Ok(())
        } else {
            Err(Error::KernelCapability {
                family: self.family.name(),
                capability: "universal",
            })
        }
    }

    /// Univariate density kernel value; assumes the density capability.
    pub fn density_1d(&self, y: f64) -> f64 {
        let s = self.scale();
        let u = y / s;
        match self.family {
            KernelFamily::GaussianRbf => (-0.5 * u * u).exp() / (s * (2.0 * PI).sqrt()),
            KernelFamily::LaplacianRbf => (-u.abs()).exp() / (2.0 * s),
            KernelFamily::UniformBox => {
                if u.abs() <= 1.0 {
                    0.5 / s
                } else {
                    0.0
                }
            }
            KernelFamily::Triangular => (1.0 - u.abs()).max(0.0) / s,
            KernelFamily::Epanechnikov => 0.75 * (1.0 - u * u).max(0.0) / s,
        }
    }

    /// Points where the univariate density kernel is not smooth.
    pub fn density_breakpoints(&self) -> Vec<f64> {
        let s = self.scale();
        match self.family {
            KernelFamily::GaussianRbf => vec![],
            KernelFamily::LaplacianRbf => vec![0.0],
            KernelFamily::UniformBox | KernelFamily::Epanechnikov => vec![-s, s],
            KernelFamily::Triangular => vec![-s, 0.0, s],
        }
    }

    /// Half-width of the support, `None` for kernels with unbounded support.
    pub fn support_radius(&self) -> Option<f64> {
        match self.family {
            KernelFamily::GaussianRbf | KernelFamily::LaplacianRbf => None,
            _ => Some(self.scale()),
        }
    }

    /// Self-convolution `(K * K)(u) = ∫ K(v) K(u − v) dv` of the univariate
    /// density kernel.
    pub fn density_self_convolution(&self, u: f64) -> f64 {
        let s = self.scale();
        match self.family {
            KernelFamily::GaussianRbf => {
                let var = 2.0 * s * s;
                (-u * u / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
            }
            KernelFamily::LaplacianRbf => {
                let a = u.abs() / s;
                (1.0 + a) * (-a).exp() / (4.0 * s)
            }
            KernelFamily::UniformBox => (2.0 * s - u.abs()).max(0.0) / (4.0 * s * s),
            KernelFamily::Triangular | KernelFamily::Epanechnikov => {
                let lo = (-s).max(u - s);
                let hi = s.min(u + s);
                if hi <= lo {
                    return 0.0;
                }
                // Piecewise polynomial of degree ≤ 4 between the kinks.
                let f = |v: f64| self.density_1d(v) * self.density_1d(u - v);
                quad::gauss_legendre_pieces(&f, lo, hi, &[0.0, u], 1)
            }
        }
    }
}

/// Evaluate the density kernel at `y`; a product of univariate kernels for
/// multivariate `y`.
pub fn eval_density_kernel(spec: &KernelSpec, y: &[f64]) -> Result<f64> {
    spec.require_density()?;
    Ok(y.iter().map(|&v| spec.density_1d(v)).product())
}

/// Evaluate the positive definite kernel `K(s, t)`.
///
/// The rbf families use the Euclidean norm. The triangular kernel is the
/// product of one-dimensional triangles, which stays positive definite in
/// every dimension.
pub fn eval_pd_kernel(spec: &KernelSpec, s: &[f64], t: &[f64]) -> Result<f64> {
    spec.require_positive_definite()?;
    if s.len() != t.len() {
        return Err(Error::DimensionMismatch {
            expected: s.len(),
            got: t.len(),
        });
    }
    Ok(pd_unchecked(spec, s, t))
}

/// [`eval_pd_kernel`] without capability or dimension checks.
pub(crate) fn pd_unchecked(spec: &KernelSpec, s: &[f64], t: &[f64]) -> f64 {
    let scale = spec.scale();
    match spec.family {
        KernelFamily::GaussianRbf => {
            let d2: f64 = s.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2 / (2.0 * scale * scale)).exp()
        }
        KernelFamily::LaplacianRbf => {
            let d2: f64 = s.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2.sqrt() / scale).exp()
        }
        KernelFamily::Triangular => s
            .iter()
            .zip(t)
            .map(|(a, b)| (1.0 - (a - b).abs() / scale).max(0.0))
            .product(),
        KernelFamily::UniformBox | KernelFamily::Epanechnikov => {
            unreachable!("capability checked by caller")
        }
    }
}

/// Per-condition outcome of [`validate_density_conditions`].
#[derive(Debug, Clone, Serialize)]
pub struct DensityConditionReport {
    pub nonnegative: bool,
    pub bounded: bool,
    pub sup: f64,
    pub integral: f64,
    pub integral_ok: bool,
    pub tail_value: f64,
    pub tail_ok: bool,
    /// Half-width of the final integration window.
    pub radius: f64,
}

impl DensityConditionReport {
    pub fn all_pass(&self) -> bool {
        self.nonnegative && self.bounded && self.integral_ok && self.tail_ok
    }
}

const INTEGRAL_TOL: f64 = 1e-6;
const TAIL_TOL: f64 = 1e-6;

/// Check the Parzen admissibility conditions of a density kernel numerically:
/// nonnegativity, bounded supremum, unit integral and vanishing `|y K(y)|`.
///
/// Multivariate kernels are products of this univariate kernel, so the
/// univariate check covers them coordinate-wise.
pub fn validate_density_conditions(spec: &KernelSpec) -> DensityConditionReport {
    let f = |y: f64| spec.density_1d(y);
    validate_density_fn(&f, spec.scale(), &spec.density_breakpoints())
}

/// [`validate_density_conditions`] for an arbitrary univariate function with
/// characteristic width `scale` and known non-smooth points `breaks`.
pub fn validate_density_fn<F: Fn(f64) -> f64>(
    f: &F,
    scale: f64,
    breaks: &[f64],
) -> DensityConditionReport {
    let mut radius = 8.0 * scale;
    let mut integral = quad::simpson_pieces(f, -radius, radius, breaks, 1e-12);
    for _ in 0..12 {
        let wider = quad::simpson_pieces(f, -2.0 * radius, 2.0 * radius, breaks, 1e-12);
        let change = (wider - integral).abs();
        radius *= 2.0;
        integral = wider;
        if change < 1e-9 {
            break;
        }
    }

    const GRID: usize = 20_001;
    let step = 2.0 * radius / (GRID - 1) as f64;
    let mut nonnegative = true;
    let mut sup: f64 = 0.0;
    let grid = (0..GRID)
        .map(|k| -radius + k as f64 * step)
        .chain(breaks.iter().copied());
    for y in grid {
        let v = f(y);
        if v.is_nan() || v < 0.0 {
            nonnegative = false;
        }
        sup = sup.max(v);
    }
    let bounded = sup.is_finite();
    let tail_value = (radius * f(radius)).abs().max((radius * f(-radius)).abs());
    DensityConditionReport {
        nonnegative,
        bounded,
        sup,
        integral,
        integral_ok: (integral - 1.0).abs() < INTEGRAL_TOL,
        tail_value,
        tail_ok: tail_value < TAIL_TOL,
        radius,
    }
}

/// Gram matrix of a positive definite kernel over a point set.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub kernel: KernelSpec,
    pub points: Vec<Vec<f64>>,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.entries)
    }

    pub fn induced_squared_distance(&self, i: usize, j: usize) -> Result<f64> {
        induced_squared_distance(&self.entries, i, j)
    }
}

/// Assemble `entries[i][j] = K(points[i], points[j])`.
///
/// Rows are computed in parallel; the upper triangle is computed once and
/// mirrored so the result is exactly symmetric.
pub fn gram_matrix(spec: &KernelSpec, points: &[Vec<f64>]) -> Result<GramMatrix> {
    spec.require_positive_definite()?;
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty("gram matrix needs at least one point"));
    }
    let d = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }
    let entries = cross_gram(spec, points, points, true);
    Ok(GramMatrix {
        entries,
        kernel: spec.clone(),
        points: points.to_vec(),
    })
}

/// `K(a[i], b[j])` for all pairs. When `symmetric` is set, `a` and `b` are
/// the same set and only the upper triangle is evaluated.
pub(crate) fn cross_gram(
    spec: &KernelSpec,
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    symmetric: bool,
) -> DMatrix<f64> {
    let rows = par::map_range(a.len(), |i| {
        let start = if symmetric { i } else { 0 };
        (start..b.len())
            .map(|j| pd_unchecked(spec, &a[i], &b[j]))
            .collect::<Vec<f64>>()
    });
    let mut m = DMatrix::zeros(a.len(), b.len());
    for (i, row) in rows.into_iter().enumerate() {
        let start = if symmetric { i } else { 0 };
        for (offset, v) in row.into_iter().enumerate() {
            let j = start + offset;
            m[(i, j)] = v;
            if symmetric {
                m[(j, i)] = v;
            }
        }
    }
    m
}

/// `K(i,i) + K(j,j) − 2K(i,j)`, with round-off below zero clamped to 0.
pub fn induced_squared_distance(k: &DMatrix<f64>, i: usize, j: usize) -> Result<f64> {
    let n = k.nrows();
    for idx in [i, j] {
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, n });
        }
    }
    if i == j {
        return Ok(0.0);
    }
    Ok((k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)]).max(0.0))
}
