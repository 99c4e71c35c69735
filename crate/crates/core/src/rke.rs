//! Regularized kernel estimation.
//!
//! Given squared dissimilarities `d_ij` on an observed, connected set of
//! pairs Ω, find a PSD matrix `K` minimizing
//!
//! ```text
//! Σ_{(i,j) ∈ Ω, i<j} |d_ij − (K_ii + K_jj − 2 K_ij)| + λ · trace(K)
//! ```
//!
//! The solver is a projected subgradient method on the PSD cone, warm
//! started from classical MDS of the (shortest-path completed) distances.
//! A step that would raise the objective is rejected, so the iterate's
//! objective never increases. Subgradient entries for pairs that are fit to
//! round-off are drawn uniformly from `[−1, 1]` using the seeded generator.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, SymEigen};
use crate::mmd::DistanceMatrix;
use crate::{Error, Result};

/// A symmetric positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix {
    entries: DMatrix<f64>,
}

impl PsdMatrix {
    pub fn new(mut entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::InvalidArgument("PSD matrix must be square".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "PSD matrix has non-finite entries".into(),
            ));
        }
        let scale = entries.amax().max(1.0);
        if linalg::max_asymmetry(&entries) > 1e-12 * scale {
            return Err(Error::InvalidArgument(
                "PSD matrix must be symmetric".into(),
            ));
        }
        linalg::symmetrize(&mut entries);
        let min_eigenvalue = linalg::min_eigenvalue(&entries);
        if min_eigenvalue < -linalg::psd_tolerance(&entries) {
            return Err(Error::NotPsd { min_eigenvalue });
        }
        Ok(PsdMatrix { entries })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// `K_ii + K_jj − 2 K_ij`, i.e. `B_ij · K`.
    pub fn induced(&self, i: usize, j: usize) -> f64 {
        let k = &self.entries;
        k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)]
    }

    pub fn eigen(&self) -> SymEigen {
        linalg::sym_eigen(&self.entries)
    }
}

/// Rank-r spectral embedding `Z = Γ_r Λ_r^{1/2}`; row `i` is subject `i`'s
/// pseudo-attribute.
#[derive(Debug, Clone, Serialize)]
pub struct PseudoAttributes {
    pub requested_rank: usize,
    /// Rank actually used; smaller than requested when `K` has fewer
    /// eigenvalues above round-off.
    pub rank: usize,
    #[serde(skip)]
    pub z: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub trace_fraction_retained: f64,
}

impl PseudoAttributes {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.z.nrows())
            .map(|i| self.z.row(i).iter().copied().collect())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RkeOptions {
    pub max_iter: usize,
    /// Converged once the objective improved by less than
    /// `tol · max(1, objective)` over the last `patience` iterations.
    pub tol: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for RkeOptions {
    fn default() -> Self {
        RkeOptions {
            max_iter: 5000,
            tol: 1e-9,
            patience: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RkeSolution {
    pub kernel: PsdMatrix,
    /// Objective of the iterate after each iteration; entry 0 is the warm
    /// start.
    pub objective_trace: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl RkeSolution {
    pub fn objective(&self) -> f64 {
        *self
            .objective_trace
            .last()
            .expect("trace holds the warm start")
    }
}

fn check_sizes(k: &DMatrix<f64>, d: &DistanceMatrix) -> Result<()> {
    if k.nrows() != d.n() {
        return Err(Error::DimensionMismatch {
            expected: d.n(),
            got: k.nrows(),
        });
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )))
    }
}

fn objective_raw(k: &DMatrix<f64>, pairs: &[(usize, usize, f64)], lambda: f64) -> f64 {
    let misfit: f64 = pairs
        .iter()
        .map(|&(i, j, d)| (d - (k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)])).abs())
        .sum();
    misfit + lambda * k.trace()
}

/// L1 misfit over observed pairs plus `λ · trace(K)`.
pub fn rke_objective(k: &PsdMatrix, d: &DistanceMatrix, lambda: f64) -> Result<f64> {
    check_sizes(k.entries(), d)?;
    check_lambda(lambda)?;
    Ok(objective_raw(k.entries(), &observed(d), lambda))
}

fn observed(d: &DistanceMatrix) -> Vec<(usize, usize, f64)> {
    d.observed_pairs()
        .into_iter()
        .map(|(i, j)| (i, j, d.entries()[(i, j)]))
        .collect()
}

/// Fill unobserved squared distances with squared shortest-path lengths,
/// using `√d_ij` as edge lengths.
pub fn complete_squared_distances(d: &DistanceMatrix) -> DMatrix<f64> {
    let n = d.n();
    let mut path = DMatrix::from_element(n, n, f64::INFINITY);
    for i in 0..n {
        path[(i, i)] = 0.0;
        for j in 0..n {
            if let Some(v) = d.get(i, j) {
                path[(i, j)] = v.sqrt();
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            let ik = path[(i, k)];
            if ik.is_infinite() {
                continue;
            }
            for j in 0..n {
                let via = ik + path[(k, j)];
                if via < path[(i, j)] {
                    path[(i, j)] = via;
                }
            }
        }
    }
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = d.get(i, j).unwrap_or(path[(i, j)] * path[(i, j)]);
        }
    }
    out
}

/// Classical MDS: the PSD projection of `−½ J D J`.
pub fn classical_mds_kernel(squared: &DMatrix<f64>) -> DMatrix<f64> {
    let n = squared.nrows();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| squared.row(i).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = -0.5 * (squared[(i, j)] - row_means[i] - row_means[j] + grand);
        }
    }
    linalg::symmetrize(&mut b);
    linalg::project_psd(&b)
}

struct Subgradient<'a> {
    pairs: &'a [(usize, usize, f64)],
    lambda: f64,
    dead_zone: f64,
}

impl Subgradient<'_> {
    /// `λ I − Σ s_ij B_ij`, `s_ij = sign(d_ij − B_ij · K)`.
    fn eval(&self, k: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let n = k.nrows();
        let mut g = DMatrix::identity(n, n) * self.lambda;
        for &(i, j, d) in self.pairs {
            let r = d - (k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)]);
            let s = if r.abs() <= self.dead_zone {
                rng.random_range(-1.0..=1.0)
            } else {
                r.signum()
            };
            g[(i, i)] -= s;
            g[(j, j)] -= s;
            g[(i, j)] += s;
            g[(j, i)] += s;
        }
        g
    }
}

pub fn solve_rke(d: &DistanceMatrix, lambda: f64, opts: &RkeOptions) -> Result<RkeSolution> {
    check_lambda(lambda)?;
    if !(opts.tol.is_finite() && opts.tol >= 0.0) {
        return Err(Error::InvalidArgument("tol must be finite and >= 0".into()));
    }
    // DistanceMatrix construction already rejects disconnected masks.
    let pairs = observed(d);
    let mean_d = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64
    };
    let sub = Subgradient {
        pairs: &pairs,
        lambda,
        dead_zone: 1e-12 * mean_d.max(f64::MIN_POSITIVE),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut k = classical_mds_kernel(&complete_squared_distances(d));
    let mut f = objective_raw(&k, &pairs, lambda);
    let mut trace = vec![f];
    let finish = |k: DMatrix<f64>, trace: Vec<f64>, iterations, converged| -> Result<RkeSolution> {
        Ok(RkeSolution {
            kernel: PsdMatrix::new(k)?,
            objective_trace: trace,
            lambda,
            iterations,
            converged,
        })
    };

    let g0 = sub.eval(&k, &mut rng);
    let g0_norm2 = g0.norm_squared();
    if f == 0.0 || g0_norm2 == 0.0 {
        return finish(k, trace, 0, true);
    }
    // Polyak-type first step with the optimum estimated by 0.
    let eta0 = f / g0_norm2;

    for t in 1..=opts.max_iter {
        let g = if t == 1 {
            g0.clone()
        } else {
            sub.eval(&k, &mut rng)
        };
        let eta = eta0 / (t as f64).sqrt();
        let candidate = linalg::project_psd(&(&k - g * eta));
        let fc = objective_raw(&candidate, &pairs, lambda);
        if fc <= f {
            k = candidate;
            f = fc;
        }
        trace.push(f);
        if t >= opts.patience && trace[t - opts.patience] - f <= opts.tol * f.max(1.0) {
            return finish(k, trace, t, true);
        }
    }
    if !trace.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("RKE objective became non-finite".into()));
    }
    log::warn!(
        "RKE did not converge within {} iterations (objective {f:e})",
        opts.max_iter
    );
    finish(k, trace, opts.max_iter, false)
}

fn eigen_floor(values: &[f64]) -> f64 {
    1e-12 * values.first().copied().unwrap_or(0.0).abs().max(1.0)
}

/// Top-`r` spectral embedding of `K`.
pub fn pseudo_attributes(k: &PsdMatrix, r: usize) -> Result<PseudoAttributes> {
    let n = k.n();
    if r == 0 || r > n {
        return Err(Error::InvalidArgument(format!(
            "rank must be in 1..={n}, got {r}"
        )));
    }
    let eig = k.eigen();
    let floor = eigen_floor(&eig.values);
    let positive = eig.values.iter().take_while(|&&v| v > floor).count();
    let rank = r.min(positive);
    if rank == 0 {
        return Err(Error::ZeroTrace);
    }
    if rank < r {
        log::warn!("requested rank {r} exceeds numerical rank; using {rank}");
    }
    let mut z = DMatrix::zeros(n, rank);
    for c in 0..rank {
        let root = eig.values[c].sqrt();
        for i in 0..n {
            z[(i, c)] = eig.vectors[(i, c)] * root;
        }
    }
    let total: f64 = eig.values[..positive].iter().sum();
    let kept: f64 = eig.values[..rank].iter().sum();
    Ok(PseudoAttributes {
        requested_rank: r,
        rank,
        z,
        eigenvalues: eig.values[..rank].to_vec(),
        trace_fraction_retained: kept / total,
    })
}

/// Smallest `r` whose leading eigenvalues hold at least `trace_fraction` of
/// the trace.
pub fn choose_rank(k: &PsdMatrix, trace_fraction: f64) -> Result<usize> {
    if !(trace_fraction > 0.0 && trace_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "trace fraction must be in (0, 1], got {trace_fraction}"
        )));
    }
    let eig = k.eigen();
    let floor = eigen_floor(&eig.values);
    let values: Vec<f64> = eig
        .values
        .iter()
        .map(|&v| if v > floor { v } else { 0.0 })
        .collect();
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroTrace);
    }
    let target = trace_fraction * total;
    let mut cumulative = 0.0;
    for (idx, v) in values.iter().enumerate() {
        cumulative += v;
        if cumulative >= target {
            return Ok(idx + 1);
        }
    }
    Ok(values.iter().filter(|&&v| v > 0.0).count())
}

/// Machine-readable summary written next to an embedding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RkeReport {
    pub labels: Vec<String>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub objective_trace: Vec<f64>,
    pub rank: usize,
    pub trace_fraction: f64,
    pub trace_fraction_retained: f64,
    pub eigenvalues: Vec<f64>,
    pub all_eigenvalues: Vec<f64>,
    pub seed: u64,
}

/// Solve, choose the rank by trace fraction and extract pseudo-attributes.
pub fn embed_distances(
    d: &DistanceMatrix,
    lambda: f64,
    trace_fraction: f64,
    opts: &RkeOptions,
) -> Result<(PseudoAttributes, RkeReport)> {
    let sol = solve_rke(d, lambda, opts)?;
    let r = choose_rank(&sol.kernel, trace_fraction)?;
    let pa = pseudo_attributes(&sol.kernel, r)?;
    let report = RkeReport {
        labels: d.labels().to_vec(),
        lambda,
        iterations: sol.iterations,
        converged: sol.converged,
        objective: sol.objective(),
        objective_trace: sol.objective_trace.clone(),
        rank: pa.rank,
        trace_fraction,
        trace_fraction_retained: pa.trace_fraction_retained,
        eigenvalues: pa.eigenvalues.clone(),
        all_eigenvalues: sol.kernel.eigen().values,
        seed: opts.seed,
    };
    Ok((pa, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use proptest::prelude::{prop, prop_assert, prop_assume, proptest};
    use rand_distr::{Distribution, StandardNormal};

    fn euclidean_squared(points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = points.len();
        DMatrix::from_fn(n, n, |i, j| {
            points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
    }

    fn random_points(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn objective_examples() {
        let d = DistanceMatrix::full_unlabeled(DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 4.0, 1.0, 0.0, 2.0, 4.0, 2.0, 0.0],
        ))
        .unwrap();
        let zero = PsdMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(rke_objective(&zero, &d, 5.0).unwrap(), 7.0);

        let pts = random_points(1, 4, 2);
        let exact = DistanceMatrix::full_unlabeled(euclidean_squared(&pts)).unwrap();
        let x = DMatrix::from_fn(4, 2, |i, j| pts[i][j]);
        let gram = PsdMatrix::new(&x * x.transpose()).unwrap();
        assert!(rke_objective(&gram, &exact, 0.0).unwrap() < 1e-12);

        // B₁₂ · I = 2, so |2 − 2| + 1 · trace(I) = 2.
        let d2 =
            DistanceMatrix::full_unlabeled(DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]))
                .unwrap();
        let eye = PsdMatrix::new(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(rke_objective(&eye, &d2, 1.0).unwrap(), 2.0);
        assert!(rke_objective(&zero, &d2, 1.0).is_err());
    }

    #[test]
    fn psd_matrix_validation() {
        assert!(PsdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(PsdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])).is_err());
        assert!(PsdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).is_ok());
    }

    #[test]
    fn recovers_exact_euclidean_distances() {
        let pts = random_points(11, 10, 3);
        let d = DistanceMatrix::full_unlabeled(euclidean_squared(&pts)).unwrap();
        let sol = solve_rke(&d, 1e-6, &RkeOptions::default()).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for (i, j) in d.observed_pairs() {
            let dij = d.entries()[(i, j)];
            num += (sol.kernel.induced(i, j) - dij).powi(2);
            den += dij * dij;
        }
        assert!((num / den).sqrt() < 1e-3);
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn huge_lambda_collapses_kernel() {
        let pts = random_points(3, 8, 2);
        let d = DistanceMatrix::full_unlabeled(euclidean_squared(&pts)).unwrap();
        let sol = solve_rke(&d, 1e6, &RkeOptions::default()).unwrap();
        assert!(sol.kernel.trace() < 1e-4, "trace {}", sol.kernel.trace());
    }

    #[test]
    fn two_points_zero_lambda_attains_zero() {
        let d =
            DistanceMatrix::full_unlabeled(DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]))
                .unwrap();
        let sol = solve_rke(&d, 0.0, &RkeOptions::default()).unwrap();
        assert!(sol.objective() < 1e-12);
        assert!(sol.converged);
    }

    #[test]
    fn partial_observations_are_completed() {
        let pts = random_points(4, 6, 2);
        let full = euclidean_squared(&pts);
        let mut omega = DMatrix::from_element(6, 6, true);
        for (i, j) in [(0, 3), (1, 4), (2, 5)] {
            omega[(i, j)] = false;
            omega[(j, i)] = false;
        }
        let d = DistanceMatrix::new(full, omega, (0..6).map(|i| i.to_string()).collect()).unwrap();
        let completed = complete_squared_distances(&d);
        assert!(completed.iter().all(|v| v.is_finite()));
        // Path lengths can only overestimate straight-line distances.
        for (i, j) in [(0, 3), (1, 4), (2, 5)] {
            assert!(completed[(i, j)] >= euclidean_squared(&pts)[(i, j)] - 1e-12);
        }
        let sol = solve_rke(
            &d,
            1e-6,
            &RkeOptions {
                max_iter: 2000,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(linalg::is_psd(sol.kernel.entries()));
        assert!(sol.objective() <= sol.objective_trace[0]);
    }

    #[test]
    fn solver_is_deterministic_per_seed() {
        let pts = random_points(8, 7, 3);
        let mut sq = euclidean_squared(&pts);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..7 {
            for j in (i + 1)..7 {
                let noise: f64 = rng.random_range(0.8..1.2);
                sq[(i, j)] *= noise;
                sq[(j, i)] = sq[(i, j)];
            }
        }
        let d = DistanceMatrix::full_unlabeled(sq).unwrap();
        let opts = RkeOptions {
            seed: 17,
            max_iter: 800,
            ..Default::default()
        };
        let a = solve_rke(&d, 1e-3, &opts).unwrap();
        let b = solve_rke(&d, 1e-3, &opts).unwrap();
        assert_eq!(a.kernel, b.kernel);
        assert_eq!(a.objective_trace, b.objective_trace);
        assert!(a.objective() < a.objective_trace[0]);
    }

    #[test]
    fn pseudo_attribute_examples() {
        let eye = PsdMatrix::new(DMatrix::identity(4, 4)).unwrap();
        let pa = pseudo_attributes(&eye, 4).unwrap();
        let rows = pa.rows();
        for i in 0..4 {
            for j in 0..4 {
                let d2: f64 = rows[i]
                    .iter()
                    .zip(&rows[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let expect = if i == j { 0.0 } else { 2.0 };
                assert!((d2 - expect).abs() < 1e-10);
            }
        }

        let zvec = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let rank1 = PsdMatrix::new(&zvec * zvec.transpose()).unwrap();
        let pa = pseudo_attributes(&rank1, 1).unwrap();
        let col = pa.z.column(0);
        let sign = if col[1] * zvec[1] > 0.0 { 1.0 } else { -1.0 };
        for i in 0..3 {
            assert_relative_eq!(col[i], sign * zvec[i], epsilon = 1e-12);
        }
        // Requesting more than the numerical rank falls back.
        let pa = pseudo_attributes(&rank1, 3).unwrap();
        assert_eq!((pa.requested_rank, pa.rank), (3, 1));
        assert!(pseudo_attributes(&rank1, 0).is_err());
        assert!(pseudo_attributes(&rank1, 4).is_err());
    }

    #[test]
    fn truncated_embedding_keeps_leading_component() {
        // K = V diag(5, 2, 1) Vᵀ with an explicit orthonormal V.
        let v = DMatrix::from_row_slice(
            3,
            3,
            &[
                2.0 / 3.0,
                -2.0 / 3.0,
                1.0 / 3.0,
                2.0 / 3.0,
                1.0 / 3.0,
                -2.0 / 3.0,
                1.0 / 3.0,
                2.0 / 3.0,
                2.0 / 3.0,
            ],
        );
        let lam = [5.0, 2.0, 1.0];
        let k = &v * DMatrix::from_diagonal(&DVector::from_row_slice(&lam)) * v.transpose();
        let k = PsdMatrix::new(k).unwrap();
        let pa = pseudo_attributes(&k, 1).unwrap();
        let approx = &pa.z * pa.z.transpose();
        let leading = v.column(0) * v.column(0).transpose() * 5.0;
        assert!((approx - &leading).abs().max() < 1e-10);
        let residual = k.entries() - leading;
        // Remaining Frobenius error equals the dropped eigenvalues.
        assert_relative_eq!(
            residual.norm(),
            (2.0f64 * 2.0 + 1.0).sqrt(),
            epsilon = 1e-10
        );
        assert_relative_eq!(pa.trace_fraction_retained, 5.0 / 8.0, epsilon = 1e-12);
    }

    #[test]
    fn choose_rank_examples() {
        let diag = |v: &[f64]| {
            PsdMatrix::new(DMatrix::from_diagonal(&DVector::from_row_slice(v))).unwrap()
        };
        // 10/11.1 < 0.95 <= 11/11.1
        assert_eq!(choose_rank(&diag(&[10.0, 1.0, 0.1, 0.0]), 0.95).unwrap(), 2);
        assert_eq!(choose_rank(&diag(&[10.0, 1.0, 0.1, 0.0]), 1.0).unwrap(), 3);
        assert_eq!(
            choose_rank(&PsdMatrix::new(DMatrix::identity(5, 5)).unwrap(), 0.5).unwrap(),
            3
        );
        assert!(matches!(
            choose_rank(&diag(&[0.0, 0.0]), 0.5),
            Err(Error::ZeroTrace)
        ));
        assert!(choose_rank(&diag(&[1.0]), 0.0).is_err());
        assert!(choose_rank(&diag(&[1.0]), 1.5).is_err());
    }

    proptest! {
        #[test]
        fn choose_rank_monotone(vals in prop::collection::vec(0.0f64..10.0, 1..8), a in 0.01f64..1.0, b in 0.01f64..1.0) {
            prop_assume!(vals.iter().any(|&v| v > 1e-6));
            let k = PsdMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vals))).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(choose_rank(&k, lo).unwrap() <= choose_rank(&k, hi).unwrap());
        }

        #[test]
        fn rotated_pseudo_attributes_keep_distances(seed in 0u64..1000, angle in 0.0f64..std::f64::consts::TAU) {
            let pts = random_points(seed, 6, 2);
            let x = DMatrix::from_fn(6, 2, |i, j| pts[i][j]);
            let k = PsdMatrix::new(&x * x.transpose()).unwrap();
            let z = pseudo_attributes(&k, 2).unwrap().z;
            let q = DMatrix::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()]);
            let zq = &z * q;
            for i in 0..6 {
                for j in 0..6 {
                    let a = (z.row(i) - z.row(j)).norm_squared();
                    let b = (zq.row(i) - zq.row(j)).norm_squared();
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
