//! Averaging operators and kernel centering.
//!
//! For a probability measure `dμ_α` on one variable, `E_α` integrates that
//! variable out. Centering a kernel with respect to `E_α` removes the
//! constant functions from its RKHS:
//!
//! ```text
//! K̃(s, t) = K(s, t) − E_s K(s, t) − E_t K(s, t) + E_s E_t K(s, t)
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::kernel::{pd_unchecked, KernelSpec};
use crate::{quad, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Uniform weights on the observed values of the variable.
    #[default]
    EmpiricalMarginal,
    /// Lebesgue measure on `[0, 1]` (covariates are rescaled to it).
    UniformUnitInterval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragingOperator {
    pub variable: usize,
    pub measure: Measure,
}

/// A function sampled on a tensor grid, stored row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub nodes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn from_fn<F: Fn(&[f64]) -> f64>(nodes: Vec<Vec<f64>>, f: F) -> Self {
        let shape: Vec<usize> = nodes.iter().map(Vec::len).collect();
        let total: usize = shape.iter().product();
        let mut values = Vec::with_capacity(total);
        let mut point = vec![0.0; shape.len()];
        for flat in 0..total {
            let mut rem = flat;
            for axis in (0..shape.len()).rev() {
                point[axis] = nodes[axis][rem % shape[axis]];
                rem /= shape[axis];
            }
            values.push(f(&point));
        }
        GridFunction { nodes, values }
    }

    fn stride(&self, axis: usize) -> usize {
        self.nodes[axis + 1..].iter().map(Vec::len).product()
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        GridFunction {
            nodes: self.nodes.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        GridFunction {
            nodes: self.nodes.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl AveragingOperator {
    /// Quadrature weights of the measure on the grid nodes of this variable.
    ///
    /// Empirical: equal weights. Uniform on `[0, 1]`: trapezoid weights,
    /// which assume the nodes are sorted and span the interval.
    pub fn weights(&self, nodes: &[f64]) -> Vec<f64> {
        let m = nodes.len();
        match self.measure {
            Measure::EmpiricalMarginal => vec![1.0 / m as f64; m],
            Measure::UniformUnitInterval => {
                if m == 1 {
                    return vec![1.0];
                }
                let mut w = vec![0.0; m];
                for k in 0..m - 1 {
                    let h = nodes[k + 1] - nodes[k];
                    w[k] += 0.5 * h;
                    w[k + 1] += 0.5 * h;
                }
                let total: f64 = w.iter().sum();
                w.iter().map(|v| v / total).collect()
            }
        }
    }

    /// `(E_α f)(t)`: average over this variable; the result is constant
    /// along its axis.
    pub fn apply(&self, f: &GridFunction) -> GridFunction {
        let axis = self.variable;
        let len = f.nodes[axis].len();
        let stride = f.stride(axis);
        let w = self.weights(&f.nodes[axis]);
        let mut out = vec![0.0; f.values.len()];
        let block = len * stride;
        for base in (0..f.values.len()).step_by(block) {
            for inner in 0..stride {
                let avg: f64 = (0..len)
                    .map(|k| w[k] * f.values[base + k * stride + inner])
                    .sum();
                for k in 0..len {
                    out[base + k * stride + inner] = avg;
                }
            }
        }
        GridFunction {
            nodes: f.nodes.clone(),
            values: out,
        }
    }

    /// `(I − E_α) f`.
    pub fn complement(&self, f: &GridFunction) -> GridFunction {
        f.sub(&self.apply(f))
    }
}

/// ANOVA terms of `f` over all subsets of variables: the entry for subset `S`
/// is `Π_{α∈S}(I − E_α) Π_{β∉S} E_β f`. Subsets are encoded as bitmasks.
pub fn anova_decompose(f: &GridFunction, ops: &[AveragingOperator]) -> Vec<(u32, GridFunction)> {
    let d = ops.len();
    (0..(1u32 << d))
        .map(|mask| {
            let mut g = f.clone();
            for (k, op) in ops.iter().enumerate() {
                g = if mask & (1 << k) != 0 {
                    op.complement(&g)
                } else {
                    op.apply(&g)
                };
            }
            (mask, g)
        })
        .collect()
}

/// A univariate kernel centered under an averaging measure.
#[derive(Debug, Clone)]
pub struct CenteredKernel {
    kernel: KernelSpec,
    measure: Measure,
    data: Vec<f64>,
    grand_mean: f64,
}

impl CenteredKernel {
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    /// `E_t K(s, t)`.
    pub fn mean_against(&self, s: f64) -> f64 {
        match self.measure {
            Measure::EmpiricalMarginal => {
                let sum: f64 = self
                    .data
                    .iter()
                    .map(|&x| pd_unchecked(&self.kernel, &[s], &[x]))
                    .sum();
                sum / self.data.len() as f64
            }
            Measure::UniformUnitInterval => uniform_mean(&self.kernel, s),
        }
    }

    pub fn grand_mean(&self) -> f64 {
        self.grand_mean
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        pd_unchecked(&self.kernel, &[s], &[t]) - self.mean_against(s) - self.mean_against(t)
            + self.grand_mean
    }

    /// `K̃(a_i, b_j)` with the averages computed once per point.
    pub fn gram(&self, a: &[f64], b: &[f64]) -> DMatrix<f64> {
        let ma: Vec<f64> = a.iter().map(|&s| self.mean_against(s)).collect();
        let mb: Vec<f64> = b.iter().map(|&t| self.mean_against(t)).collect();
        DMatrix::from_fn(a.len(), b.len(), |i, j| {
            pd_unchecked(&self.kernel, &[a[i]], &[b[j]]) - ma[i] - mb[j] + self.grand_mean
        })
    }
}

fn kernel_breaks(kernel: &KernelSpec, s: f64) -> Vec<f64> {
    match kernel.support_radius() {
        Some(a) => vec![s - a, s, s + a],
        None => vec![s],
    }
}

fn uniform_mean(kernel: &KernelSpec, s: f64) -> f64 {
    let f = |u: f64| pd_unchecked(kernel, &[s], &[u]);
    quad::gauss_legendre_pieces(&f, 0.0, 1.0, &kernel_breaks(kernel, s), 16)
}

pub fn center_kernel(
    spec: &KernelSpec,
    variable_data: &[f64],
    measure: Measure,
) -> Result<CenteredKernel> {
    spec.require_positive_definite()?;
    if variable_data.is_empty() {
        return Err(Error::Empty("centering needs variable data"));
    }
    if variable_data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "variable data must be finite".into(),
        ));
    }
    let mut ck = CenteredKernel {
        kernel: spec.clone(),
        measure,
        data: variable_data.to_vec(),
        grand_mean: 0.0,
    };
    ck.grand_mean = match measure {
        Measure::EmpiricalMarginal => {
            let n = variable_data.len() as f64;
            variable_data
                .iter()
                .map(|&x| ck.mean_against(x))
                .sum::<f64>()
                / n
        }
        Measure::UniformUnitInterval => {
            // m(u) has kinks where u ± a crosses an end of [0, 1].
            let breaks = spec.support_radius().map_or(vec![], |a| vec![a, 1.0 - a]);
            let m = |u: f64| uniform_mean(spec, u);
            quad::gauss_legendre_pieces(&m, 0.0, 1.0, &breaks, 32)
        }
    };
    Ok(ck)
}
