//! Tensor-product kernels assembled from term specs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::averaging::{center_kernel, CenteredKernel, Measure};
use super::{validate_terms, Design, TermKind, TermSpec};
use crate::kernel::cross_gram;
use crate::parzen::quantile_sorted;
use crate::{Error, KernelSpec, Result};

/// Default kernel for a rescaled covariate.
pub(crate) const DEFAULT_COVARIATE_SIGMA: f64 = 0.5;

/// Affine map of each used covariate onto `[0, 1]` using the training range.
/// A constant covariate keeps range 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub range: Vec<f64>,
}

impl Scaling {
    fn fit(design: &Design, names: Vec<String>) -> Result<Self> {
        let mut min = Vec::with_capacity(names.len());
        let mut range = Vec::with_capacity(names.len());
        for name in &names {
            let col = design
                .column(name)
                .ok_or_else(|| Error::InvalidTerms(format!("unknown variable `{name}`")))?;
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            min.push(lo);
            range.push(if hi > lo { hi - lo } else { 1.0 });
        }
        Ok(Scaling { names, min, range })
    }

    /// Rescaled columns of `design`, one per scaled covariate.
    pub fn apply(&self, design: &Design) -> Result<Vec<Vec<f64>>> {
        self.names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let col = design
                    .column(name)
                    .ok_or_else(|| Error::InvalidArgument(format!("missing variable `{name}`")))?;
                Ok(col
                    .iter()
                    .map(|v| (v - self.min[k]) / self.range[k])
                    .collect())
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Covariate {
        column: usize,
        kernel: CenteredKernel,
    },
    Density {
        kernel: KernelSpec,
    },
}

#[derive(Debug, Clone)]
struct ResolvedTerm {
    spec: TermSpec,
    factors: Vec<Factor>,
}

#[derive(Debug, Clone)]
struct Scaled {
    cols: Vec<Vec<f64>>,
    pseudo: Option<Vec<Vec<f64>>>,
    n: usize,
}

/// `K_total(s, t) = Σ_terms θ Π_factors K_factor(s, t)`, bound to the
/// training design that defines its centering and scaling.
#[derive(Debug, Clone)]
pub struct TensorKernel {
    terms: Vec<ResolvedTerm>,
    scaling: Scaling,
    measure: Measure,
    training: Scaled,
}

/// Median pairwise Euclidean distance, or 1 when it is zero or undefined.
pub(crate) fn median_distance(points: &[Vec<f64>]) -> f64 {
    let mut d = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let s: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d.push(s.sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = quantile_sorted(&d, 0.5);
    if m > 0.0 && m.is_finite() {
        m
    } else {
        1.0
    }
}

/// Build the composite kernel. Requires at least one non-constant term.
pub fn build_tensor_kernel(
    terms: &[TermSpec],
    training: &Design,
    measure: Measure,
) -> Result<TensorKernel> {
    if terms.iter().all(|t| t.kind == TermKind::Constant) {
        return Err(Error::InvalidTerms(
            "at least one non-constant term is required".into(),
        ));
    }
    TensorKernel::build(terms, training, measure)
}

impl TensorKernel {
    pub(crate) fn build(terms: &[TermSpec], training: &Design, measure: Measure) -> Result<Self> {
        validate_terms(terms)?;
        let mut used: Vec<String> = Vec::new();
        for t in terms {
            for v in &t.vars {
                if training.column_index(v).is_none() {
                    return Err(Error::InvalidTerms(format!("unknown variable `{v}`")));
                }
                if !used.contains(v) {
                    used.push(v.clone());
                }
            }
        }
        used.sort_by_key(|v| training.column_index(v));
        let scaling = Scaling::fit(training, used)?;
        let cols = scaling.apply(training)?;
        let needs_density = terms.iter().any(|t| t.kind.uses_density());
        let pseudo = match (needs_density, training.pseudo()) {
            (true, None) => {
                return Err(Error::InvalidTerms(
                    "density terms need pseudo-attributes".into(),
                ));
            }
            (true, Some(z)) => Some(z.to_vec()),
            (false, _) => None,
        };
        let default_density = || -> Result<KernelSpec> {
            KernelSpec::gaussian(median_distance(pseudo.as_deref().unwrap_or(&[])))
        };

        let mut resolved = Vec::with_capacity(terms.len());
        for t in terms {
            let mut kernels = t.kernels.clone();
            if kernels.is_empty() && t.kind != TermKind::Constant {
                for _ in &t.vars {
                    kernels.push(KernelSpec::gaussian(DEFAULT_COVARIATE_SIGMA)?);
                }
                if t.kind.uses_density() {
                    kernels.push(default_density()?);
                }
            }
            let mut factors = Vec::with_capacity(kernels.len());
            for (k, v) in t.vars.iter().enumerate() {
                let column = scaling
                    .names
                    .iter()
                    .position(|n| n == v)
                    .expect("scaled above");
                factors.push(Factor::Covariate {
                    column,
                    kernel: center_kernel(&kernels[k], &cols[column], measure)?,
                });
            }
            if t.kind.uses_density() {
                let kernel = kernels.last().expect("density kernel").clone();
                if !kernel.family().is_rbf() {
                    return Err(Error::KernelCapability {
                        family: kernel.family().name(),
                        capability: "rbf kernel over pseudo-attributes",
                    });
                }
                factors.push(Factor::Density { kernel });
            }
            resolved.push(ResolvedTerm {
                spec: TermSpec {
                    kernels,
                    ..t.clone()
                },
                factors,
            });
        }
        Ok(TensorKernel {
            terms: resolved,
            scaling,
            measure,
            training: Scaled {
                n: training.n(),
                cols,
                pseudo,
            },
        })
    }

    /// Term specs with default kernels filled in.
    pub fn terms(&self) -> Vec<TermSpec> {
        self.terms.iter().map(|t| t.spec.clone()).collect()
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn n_training(&self) -> usize {
        self.training.n
    }

    fn scale(&self, design: &Design) -> Result<Scaled> {
        let cols = self.scaling.apply(design)?;
        let pseudo = match &self.training.pseudo {
            None => None,
            Some(train) => {
                let z = design.pseudo().ok_or_else(|| {
                    Error::InvalidArgument(
                        "missing variable: density terms need pseudo-attributes".into(),
                    )
                })?;
                let r = train.first().map_or(0, Vec::len);
                if let Some(row) = z.iter().find(|row| row.len() != r) {
                    return Err(Error::DimensionMismatch {
                        expected: r,
                        got: row.len(),
                    });
                }
                Some(z.to_vec())
            }
        };
        Ok(Scaled {
            cols,
            pseudo,
            n: design.n(),
        })
    }

    /// θ-weighted Gram of every non-constant term between `a` and `b`.
    fn term_grams_scaled(&self, a: &Scaled, b: &Scaled, same: bool) -> Vec<(String, DMatrix<f64>)> {
        self.terms
            .iter()
            .filter(|t| t.spec.kind != TermKind::Constant)
            .map(|t| {
                let mut m = DMatrix::from_element(a.n, b.n, t.spec.theta);
                for f in &t.factors {
                    let g = match f {
                        Factor::Covariate { column, kernel } => {
                            kernel.gram(&a.cols[*column], &b.cols[*column])
                        }
                        Factor::Density { kernel } => cross_gram(
                            kernel,
                            a.pseudo.as_deref().expect("checked"),
                            b.pseudo.as_deref().expect("checked"),
                            same,
                        ),
                    };
                    m.component_mul_assign(&g);
                }
                (t.spec.name(), m)
            })
            .collect()
    }

    /// Term Grams between the points of `design` (rows) and the training
    /// points (columns).
    pub fn term_grams(&self, design: &Design) -> Result<Vec<(String, DMatrix<f64>)>> {
        let a = self.scale(design)?;
        Ok(self.term_grams_scaled(&a, &self.training, false))
    }

    /// `K_total` between `design` and the training points.
    pub fn gram(&self, design: &Design) -> Result<DMatrix<f64>> {
        let a = self.scale(design)?;
        Ok(sum_grams(
            self.term_grams_scaled(&a, &self.training, false),
            a.n,
            self.training.n,
        ))
    }

    /// `K_total` on the training points, `G` in the fitting equations.
    pub fn training_gram(&self) -> DMatrix<f64> {
        let t = &self.training;
        let mut g = sum_grams(self.term_grams_scaled(t, t, true), t.n, t.n);
        crate::linalg::symmetrize(&mut g);
        g
    }

    /// `K_total` between two arbitrary designs.
    pub fn cross(&self, a: &Design, b: &Design) -> Result<DMatrix<f64>> {
        let (sa, sb) = (self.scale(a)?, self.scale(b)?);
        Ok(sum_grams(
            self.term_grams_scaled(&sa, &sb, false),
            sa.n,
            sb.n,
        ))
    }
}

fn sum_grams(grams: Vec<(String, DMatrix<f64>)>, rows: usize, cols: usize) -> DMatrix<f64> {
    grams
        .into_iter()
        .fold(DMatrix::zeros(rows, cols), |acc, (_, g)| acc + g)
}
