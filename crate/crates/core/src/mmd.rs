//! Kernel mean embeddings of samples and the maximum mean discrepancy between
//! them.
//!
//! A sample `X_1..X_k` maps to `f_X = (1/k) Σ_j K(X_j, ·)` in the RKHS of a
//! universal kernel `K`. The squared RKHS distance between two embeddings
//! expands into three Gram sums:
//!
//! ```text
//! ‖f_X − g_Y‖² = (1/k²) ΣΣ K(X_i, X_j) + (1/ℓ²) ΣΣ K(Y_i, Y_j) − (2/(kℓ)) ΣΣ K(X_i, Y_j)
//! ```

use std::cmp::Ordering;
use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::kernel::{pd_unchecked, KernelSpec};
use crate::parzen::Sample;
use crate::{par, Error, Result};

/// Below this, a negative squared MMD is treated as a bug rather than
/// round-off.
const MMD_NEGATIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct EmbeddedDensity {
    sample: Sample,
    kernel: KernelSpec,
}

pub fn embed_sample(sample: Sample, kernel: KernelSpec) -> Result<EmbeddedDensity> {
    kernel.require_universal()?;
    Ok(EmbeddedDensity { sample, kernel })
}

impl EmbeddedDensity {
    pub fn sample(&self) -> &Sample {
        &self.sample
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// `f_X(t) = (1/k) Σ_j K(X_j, t)`.
    pub fn eval(&self, t: &[f64]) -> Result<f64> {
        let d = self.sample.dim();
        if t.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: t.len(),
            });
        }
        let pts = self.sample.points();
        let sum: f64 = pts.iter().map(|x| pd_unchecked(&self.kernel, x, t)).sum();
        Ok(sum / pts.len() as f64)
    }

    /// `⟨f_X, f_X⟩ = (1/k²) ΣΣ K(X_i, X_j)`.
    pub fn self_inner(&self) -> f64 {
        cross_mean(&self.kernel, self.sample.points(), self.sample.points())
    }
}

pub fn eval_embedding(e: &EmbeddedDensity, t: &[f64]) -> Result<f64> {
    e.eval(t)
}

fn cross_mean(kernel: &KernelSpec, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for x in a {
        let row: f64 = b.iter().map(|y| pd_unchecked(kernel, x, y)).sum();
        total += row;
    }
    total / (a.len() as f64 * b.len() as f64)
}

/// Total order on point lists, used to fix the summation order of the cross
/// term so that `mmd(a, b)` and `mmd(b, a)` are bit-identical.
fn canonical_cmp(a: &[Vec<f64>], b: &[Vec<f64>]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

fn check_pair(a: &EmbeddedDensity, b: &EmbeddedDensity) -> Result<()> {
    if a.kernel != b.kernel {
        return Err(Error::InvalidArgument(
            "embeddings use different kernels".into(),
        ));
    }
    if a.sample.dim() != b.sample.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.sample.dim(),
            got: b.sample.dim(),
        });
    }
    Ok(())
}

fn combine(self_a: f64, self_b: f64, cross: f64) -> Result<f64> {
    let v = (self_a + self_b) - 2.0 * cross;
    if v < -MMD_NEGATIVE_TOL {
        return Err(Error::Numerical(format!(
            "squared MMD is negative beyond round-off: {v:e}"
        )));
    }
    Ok(v.max(0.0))
}

fn cross_term(a: &EmbeddedDensity, b: &EmbeddedDensity) -> f64 {
    let (pa, pb) = (a.sample.points(), b.sample.points());
    match canonical_cmp(pa, pb) {
        Ordering::Greater => cross_mean(&a.kernel, pb, pa),
        _ => cross_mean(&a.kernel, pa, pb),
    }
}

/// Squared RKHS distance `‖f_X − g_Y‖²` between two embeddings.
pub fn mmd_squared(a: &EmbeddedDensity, b: &EmbeddedDensity) -> Result<f64> {
    check_pair(a, b)?;
    combine(a.self_inner(), b.self_inner(), cross_term(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// `‖f_X − g_Y‖`.
    #[default]
    RkhsNorm,
    /// `‖f_X − g_Y‖²`.
    RkhsNormSquared,
}

impl std::str::FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rkhs_norm" => Ok(DistanceMetric::RkhsNorm),
            "rkhs_norm_squared" => Ok(DistanceMetric::RkhsNormSquared),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

/// Pairwise dissimilarities between subjects with an observation mask.
///
/// Unobserved entries hold 0 and are ignored by consumers.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    entries: DMatrix<f64>,
    omega: DMatrix<bool>,
    labels: Vec<String>,
}

impl DistanceMatrix {
    /// Validates symmetry, zero diagonal, nonnegative observed entries, a
    /// symmetric mask with true diagonal, and connectivity of the observed
    /// pairs.
    pub fn new(entries: DMatrix<f64>, omega: DMatrix<bool>, labels: Vec<String>) -> Result<Self> {
        let n = entries.nrows();
        let bad = |m: String| Err(Error::InvalidDistanceMatrix(m));
        if n == 0 {
            return bad("matrix is empty".into());
        }
        if entries.ncols() != n || omega.nrows() != n || omega.ncols() != n {
            return bad("entries and mask must be square and of equal size".into());
        }
        if labels.len() != n {
            return bad(format!("{} labels for {n} subjects", labels.len()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return bad(format!("duplicate label `{dup}`"));
        }
        let mut entries = entries;
        for i in 0..n {
            if !omega[(i, i)] {
                return bad(format!("mask diagonal is false at {i}"));
            }
            if entries[(i, i)] != 0.0 {
                return bad(format!("nonzero diagonal at {i}"));
            }
            for j in (i + 1)..n {
                if omega[(i, j)] != omega[(j, i)] {
                    return bad(format!("mask is asymmetric at ({i}, {j})"));
                }
                if !omega[(i, j)] {
                    entries[(i, j)] = 0.0;
                    entries[(j, i)] = 0.0;
                    continue;
                }
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
                if !(a.is_finite() && b.is_finite()) {
                    return bad(format!("non-finite entry at ({i}, {j})"));
                }
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return bad(format!("asymmetric entries at ({i}, {j}): {a} vs {b}"));
                }
                if a < 0.0 || b < 0.0 {
                    return bad(format!("negative entry at ({i}, {j})"));
                }
                entries[(j, i)] = a;
            }
        }
        let components = count_components(&omega);
        if components > 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(DistanceMatrix {
            entries,
            omega,
            labels,
        })
    }

    /// Fully observed matrix.
    pub fn full(entries: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let n = entries.nrows();
        Self::new(entries, DMatrix::from_element(n, n, true), labels)
    }

    /// Fully observed matrix with labels `s0, s1, ...`.
    pub fn full_unlabeled(entries: DMatrix<f64>) -> Result<Self> {
        let labels = (0..entries.nrows()).map(|i| format!("s{i}")).collect();
        Self::full(entries, labels)
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn omega(&self) -> &DMatrix<bool> {
        &self.omega
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.omega[(i, j)].then(|| self.entries[(i, j)])
    }

    pub fn is_fully_observed(&self) -> bool {
        self.omega.iter().all(|&b| b)
    }

    /// Observed pairs `(i, j)` with `i < j`.
    pub fn observed_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.omega[(i, j)] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Elementwise square of the observed entries.
    pub fn squared(&self) -> Self {
        DistanceMatrix {
            entries: self.entries.map(|v| v * v),
            omega: self.omega.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Elementwise square root of the observed entries.
    pub fn sqrt(&self) -> Self {
        DistanceMatrix {
            entries: self.entries.map(f64::sqrt),
            omega: self.omega.clone(),
            labels: self.labels.clone(),
        }
    }
}

fn count_components(omega: &DMatrix<bool>) -> usize {
    let n = omega.nrows();
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if omega[(i, j)] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    components
}

/// MMD distances between every pair of samples.
///
/// Self terms are computed once per sample; the pairs are computed in
/// parallel and each entry is independent.
pub fn pairwise_density_distances(
    samples: &[Sample],
    kernel: &KernelSpec,
    metric: DistanceMetric,
) -> Result<DistanceMatrix> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(
            "pairwise distances need at least 2 samples".into(),
        ));
    }
    kernel.require_universal()?;
    let d = samples[0].dim();
    if let Some(s) = samples.iter().find(|s| s.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: s.dim(),
        });
    }
    let embeddings: Vec<EmbeddedDensity> = samples
        .iter()
        .map(|s| embed_sample(s.clone(), kernel.clone()))
        .collect::<Result<_>>()?;
    let self_terms = par::map_slice(&embeddings, EmbeddedDensity::self_inner);

    let n = samples.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let values = par::map_slice(&pairs, |&(i, j)| {
        let cross = cross_term(&embeddings[i], &embeddings[j]);
        combine(self_terms[i], self_terms[j], cross)
    });

    let mut entries = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        let sq = v?;
        let v = match metric {
            DistanceMetric::RkhsNorm => sq.sqrt(),
            DistanceMetric::RkhsNormSquared => sq,
        };
        entries[(i, j)] = v;
        entries[(j, i)] = v;
    }
    let labels = samples
        .iter()
        .enumerate()
        .map(|(i, s)| s.label().map_or_else(|| format!("s{i}"), str::to_string))
        .collect();
    DistanceMatrix::full(entries, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::gram_matrix;
    use crate::parzen::{fit_parzen, Bandwidth};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn g1() -> KernelSpec {
        KernelSpec::gaussian(1.0).unwrap()
    }

    fn emb(xs: &[f64]) -> EmbeddedDensity {
        embed_sample(Sample::univariate(xs).unwrap(), g1()).unwrap()
    }

    #[test]
    fn embedding_examples() {
        let e = emb(&[0.0]);
        for t in [-2.0, 0.0, 0.3, 1.7] {
            assert_eq!(e.eval(&[t]).unwrap(), (-t * t / 2.0f64).exp());
        }
        assert_relative_eq!(
            emb(&[-1.0, 1.0]).eval(&[0.0]).unwrap(),
            (-0.5f64).exp(),
            epsilon = 1e-16
        );
        let boxed = embed_sample(
            Sample::univariate(&[0.0]).unwrap(),
            KernelSpec::uniform_box(1.0).unwrap(),
        );
        assert!(matches!(boxed, Err(Error::KernelCapability { .. })));
        let tri = embed_sample(
            Sample::univariate(&[0.0]).unwrap(),
            KernelSpec::triangular(1.0).unwrap(),
        );
        assert!(
            tri.is_err(),
            "triangular is positive definite but not universal"
        );
    }

    #[test]
    fn eval_examples() {
        let e = emb(&[0.0, 1.0]);
        assert!(e.eval(&[14.0]).unwrap() < 1e-30);
        assert_eq!(emb(&[0.0, 0.0]).eval(&[0.0]).unwrap(), 1.0);
        assert_relative_eq!(
            emb(&[0.0, 2.0]).eval(&[1.0]).unwrap(),
            (-0.5f64).exp(),
            epsilon = 1e-16
        );
        assert!(matches!(
            e.eval(&[0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mmd_examples() {
        let a = emb(&[0.3, -1.0, 2.0]);
        assert!(mmd_squared(&a, &a).unwrap() < 1e-12);
        for t in [0.5, 1.0, 2.5] {
            assert_relative_eq!(
                mmd_squared(&emb(&[0.0]), &emb(&[t])).unwrap(),
                2.0 - 2.0 * (-t * t / 2.0f64).exp(),
                epsilon = 1e-12
            );
        }
        assert_relative_eq!(
            mmd_squared(&emb(&[0.0]), &emb(&[1.0])).unwrap(),
            0.786_938_680_574_733_2,
            epsilon = 1e-12
        );
        assert!(mmd_squared(&emb(&[0.0]), &emb(&[0.0, 0.0])).unwrap() < 1e-12);
    }

    #[test]
    fn mmd_rejects_kernel_mismatch() {
        let other = embed_sample(
            Sample::univariate(&[0.0]).unwrap(),
            KernelSpec::gaussian(2.0).unwrap(),
        )
        .unwrap();
        assert!(mmd_squared(&emb(&[0.0]), &other).is_err());
    }

    #[test]
    fn pairwise_examples() {
        let same: Vec<Sample> = (0..3)
            .map(|_| Sample::univariate(&[0.0, 1.0]).unwrap())
            .collect();
        let d = pairwise_density_distances(&same, &g1(), DistanceMetric::RkhsNorm).unwrap();
        assert!(d.entries().iter().all(|&v| v == 0.0));

        let singles: Vec<Sample> = [0.0, 1.0, 2.0]
            .iter()
            .map(|&x| Sample::univariate(&[x]).unwrap())
            .collect();
        let d = pairwise_density_distances(&singles, &g1(), DistanceMetric::RkhsNorm).unwrap();
        let d01 = (2.0 - 2.0 * (-0.5f64).exp()).sqrt();
        let d02 = (2.0 - 2.0 * (-2.0f64).exp()).sqrt();
        assert_relative_eq!(d.get(0, 1).unwrap(), d01, epsilon = 1e-12);
        assert_relative_eq!(d.get(0, 2).unwrap(), d02, epsilon = 1e-12);
        assert!(d.get(0, 2).unwrap() > d.get(0, 1).unwrap());
        let sq =
            pairwise_density_distances(&singles, &g1(), DistanceMetric::RkhsNormSquared).unwrap();
        assert_relative_eq!(sq.get(0, 2).unwrap(), d02 * d02, epsilon = 1e-12);

        let two =
            pairwise_density_distances(&singles[..2], &g1(), DistanceMetric::RkhsNorm).unwrap();
        assert_eq!(two.n(), 2);
        assert_eq!(two.get(0, 1), two.get(1, 0));

        assert!(
            pairwise_density_distances(&singles[..1], &g1(), DistanceMetric::RkhsNorm).is_err()
        );
    }

    #[test]
    fn distance_matrix_validation() {
        let labels = || vec!["a".to_string(), "b".into(), "c".into()];
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0]);
        assert!(DistanceMatrix::full(m.clone(), labels()).is_ok());
        let mut asym = m.clone();
        asym[(0, 1)] = 1.5;
        assert!(DistanceMatrix::full(asym, labels()).is_err());
        let mut neg = m.clone();
        neg[(0, 2)] = -1.0;
        neg[(2, 0)] = -1.0;
        assert!(DistanceMatrix::full(neg, labels()).is_err());
        let mut omega = DMatrix::from_element(3, 3, true);
        omega[(0, 1)] = false;
        omega[(1, 0)] = false;
        omega[(0, 2)] = false;
        omega[(2, 0)] = false;
        assert!(matches!(
            DistanceMatrix::new(m.clone(), omega.clone(), labels()),
            Err(Error::Disconnected { components: 2 })
        ));
        omega[(0, 2)] = true;
        omega[(2, 0)] = true;
        let partial = DistanceMatrix::new(m, omega, labels()).unwrap();
        assert_eq!(partial.get(0, 1), None);
        assert_eq!(partial.observed_pairs(), vec![(0, 2), (1, 2)]);
    }

    #[test]
    fn parzen_equivalence_spot_check() {
        let xs = [0.1, -0.7, 1.3, 2.2];
        let h = 0.6;
        let e = embed_sample(
            Sample::univariate(&xs).unwrap(),
            KernelSpec::gaussian(h).unwrap(),
        )
        .unwrap();
        let p = fit_parzen(Sample::univariate(&xs).unwrap(), g1(), Bandwidth::Fixed(h)).unwrap();
        for t in [-1.0, 0.0, 0.5, 3.0] {
            let scaled = e.eval(&[t]).unwrap() / (h * (2.0 * PI).sqrt());
            assert!((scaled - p.eval(&[t]).unwrap()).abs() < 1e-12);
        }
    }

    fn sample_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..15)
    }

    proptest! {
        #[test]
        fn mmd_matches_joint_gram_expansion(a in sample_strategy(), b in sample_strategy(), sigma in 0.3f64..3.0) {
            let k = KernelSpec::gaussian(sigma).unwrap();
            let ea = embed_sample(Sample::new(a.clone()).unwrap(), k.clone()).unwrap();
            let eb = embed_sample(Sample::new(b.clone()).unwrap(), k.clone()).unwrap();
            let joint: Vec<Vec<f64>> = a.iter().chain(b.iter()).cloned().collect();
            let g = gram_matrix(&k, &joint).unwrap().entries;
            let (ka, kb) = (a.len(), b.len());
            let block = |r0: usize, r1: usize, c0: usize, c1: usize| {
                let mut s = 0.0;
                for i in r0..r1 { for j in c0..c1 { s += g[(i, j)]; } }
                s
            };
            let ff = block(0, ka, 0, ka) / (ka * ka) as f64;
            let gg = block(ka, ka + kb, ka, ka + kb) / (kb * kb) as f64;
            let fg = block(0, ka, ka, ka + kb) / (ka * kb) as f64;
            let expected = (ff + gg - 2.0 * fg).max(0.0);
            let got = mmd_squared(&ea, &eb).unwrap();
            prop_assert!((got - expected).abs() < 1e-12);
            prop_assert_eq!(got, mmd_squared(&eb, &ea).unwrap());
        }

        #[test]
        fn mmd_permutation_invariant(a in sample_strategy(), b in sample_strategy(), rot in 0usize..15) {
            let k = g1();
            let ea = embed_sample(Sample::new(a.clone()).unwrap(), k.clone()).unwrap();
            let eb = embed_sample(Sample::new(b.clone()).unwrap(), k.clone()).unwrap();
            let mut a2 = a.clone();
            a2.reverse();
            let r = rot % a2.len();
            a2.rotate_left(r);
            let ea2 = embed_sample(Sample::new(a2).unwrap(), k).unwrap();
            prop_assert!((mmd_squared(&ea, &eb).unwrap() - mmd_squared(&ea2, &eb).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn mmd_norm_triangle_inequality(a in sample_strategy(), b in sample_strategy(), c in sample_strategy()) {
            let k = g1();
            let e = |p: &Vec<Vec<f64>>| embed_sample(Sample::new(p.clone()).unwrap(), k.clone()).unwrap();
            let (ea, eb, ec) = (e(&a), e(&b), e(&c));
            let d = |x: &EmbeddedDensity, y: &EmbeddedDensity| mmd_squared(x, y).unwrap().sqrt();
            prop_assert!(d(&ea, &ec) <= d(&ea, &eb) + d(&eb, &ec) + 1e-10);
        }
    }
}
