//! Distance covariance and distance correlation with permutation tests.
//!
//! Inputs are either raw vectors (turned into Euclidean distance matrices)
//! or precomputed distance matrices, so MMD distances between subjects'
//! densities can be tested against ordinary attributes. For arbitrary metric
//! inputs the statistic is computed the same way, though the independence
//! characterization is only established for Euclidean distances.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mmd::DistanceMatrix;
use crate::{linalg, par, Error, Result};

/// Smallest permutation count accepted by [`permutation_test`].
pub const MIN_PERMUTATIONS: usize = 99;

/// Double-centered distance matrix `A_ij = a_ij − ā_i· − ā_·j + ā_··`.
#[derive(Debug, Clone)]
pub struct CenteredDistanceMatrix {
    pub entries: DMatrix<f64>,
    pub row_means: Vec<f64>,
    pub col_means: Vec<f64>,
    pub grand_mean: f64,
}

impl CenteredDistanceMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DcorResult {
    pub v2_xy: f64,
    pub v2_x: f64,
    pub v2_y: f64,
    pub r2: f64,
    pub p_value: Option<f64>,
    pub n_permutations: usize,
    pub seed: u64,
    pub n: usize,
}

/// One side of a distance correlation.
#[derive(Debug, Clone)]
pub enum DcorInput {
    /// One vector per observation.
    Raw(Vec<Vec<f64>>),
    /// A symmetric distance matrix with zero diagonal.
    Distances(DMatrix<f64>),
}

impl DcorInput {
    pub fn univariate(values: &[f64]) -> Self {
        DcorInput::Raw(values.iter().map(|&v| vec![v]).collect())
    }

    /// Use a fully observed [`DistanceMatrix`], e.g. MMD distances.
    pub fn from_distance_matrix(d: &DistanceMatrix) -> Result<Self> {
        if !d.is_fully_observed() {
            return Err(Error::InvalidArgument(
                "distance correlation needs a fully observed distance matrix".into(),
            ));
        }
        Ok(DcorInput::Distances(d.entries().clone()))
    }

    pub fn n(&self) -> usize {
        match self {
            DcorInput::Raw(v) => v.len(),
            DcorInput::Distances(m) => m.nrows(),
        }
    }

    pub fn distance_matrix(&self) -> Result<DMatrix<f64>> {
        match self {
            DcorInput::Raw(points) => euclidean_distances(points),
            DcorInput::Distances(m) => Ok(m.clone()),
        }
    }
}

/// `|X_i − X_j|` for all pairs.
pub fn euclidean_distances(points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty("no observations"));
    }
    let d = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

pub fn double_center(d: &DMatrix<f64>) -> Result<CenteredDistanceMatrix> {
    let n = d.nrows();
    if d.ncols() != n {
        return Err(Error::InvalidArgument(
            "distance matrix must be square".into(),
        ));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(
            "distance matrix needs n >= 2".into(),
        ));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "distance matrix has non-finite entries".into(),
        ));
    }
    if linalg::max_asymmetry(d) > 1e-12 * d.amax().max(1.0) {
        return Err(Error::InvalidArgument(
            "distance matrix is not symmetric".into(),
        ));
    }
    if (0..n).any(|i| d[(i, i)] != 0.0) {
        return Err(Error::InvalidArgument(
            "distance matrix diagonal must be zero".into(),
        ));
    }
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| d.row(i).sum() / nf).collect();
    let col_means: Vec<f64> = (0..n).map(|j| d.column(j).sum() / nf).collect();
    let grand_mean = row_means.iter().sum::<f64>() / nf;
    let entries = DMatrix::from_fn(n, n, |i, j| {
        d[(i, j)] - row_means[i] - col_means[j] + grand_mean
    });
    Ok(CenteredDistanceMatrix {
        entries,
        row_means,
        col_means,
        grand_mean,
    })
}

fn clamp_nonneg(v: f64) -> f64 {
    if (-1e-12..0.0).contains(&v) {
        0.0
    } else {
        v.max(0.0)
    }
}

fn v2_centered(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows() as f64;
    let s: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    clamp_nonneg(s / (n * n))
}

/// `V_n²(X, Y) = (1/n²) Σ A_ij B_ij`.
pub fn distance_covariance(dx: &DMatrix<f64>, dy: &DMatrix<f64>) -> Result<f64> {
    if dx.nrows() != dy.nrows() {
        return Err(Error::DimensionMismatch {
            expected: dx.nrows(),
            got: dy.nrows(),
        });
    }
    let a = double_center(dx)?;
    let b = double_center(dy)?;
    Ok(v2_centered(&a.entries, &b.entries))
}

fn r2_from(v2_xy: f64, v2_x: f64, v2_y: f64) -> f64 {
    let denom = v2_x * v2_y;
    if denom <= 0.0 {
        0.0
    } else {
        (v2_xy / denom.sqrt()).clamp(0.0, 1.0)
    }
}

struct Prepared {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    v2_x: f64,
    v2_y: f64,
}

fn prepare(x: &DcorInput, y: &DcorInput) -> Result<Prepared> {
    if x.n() != y.n() {
        return Err(Error::DimensionMismatch {
            expected: x.n(),
            got: y.n(),
        });
    }
    if x.n() < 2 {
        return Err(Error::InvalidArgument(
            "distance correlation needs n >= 2".into(),
        ));
    }
    let a = double_center(&x.distance_matrix()?)?.entries;
    let b = double_center(&y.distance_matrix()?)?.entries;
    let v2_x = v2_centered(&a, &a);
    let v2_y = v2_centered(&b, &b);
    Ok(Prepared { a, b, v2_x, v2_y })
}

pub fn distance_correlation(x: &DcorInput, y: &DcorInput) -> Result<DcorResult> {
    let p = prepare(x, y)?;
    let v2_xy = v2_centered(&p.a, &p.b);
    Ok(DcorResult {
        v2_xy,
        v2_x: p.v2_x,
        v2_y: p.v2_y,
        r2: r2_from(v2_xy, p.v2_x, p.v2_y),
        p_value: None,
        n_permutations: 0,
        seed: 0,
        n: p.a.nrows(),
    })
}

/// `(1/n²) Σ A_ij B_{π(i) π(j)}`: the statistic for `Y` reindexed by `π`.
fn v2_permuted(a: &DMatrix<f64>, b: &DMatrix<f64>, perm: &[usize]) -> f64 {
    let n = perm.len();
    let mut s = 0.0;
    for j in 0..n {
        let pj = perm[j];
        for i in 0..n {
            s += a[(i, j)] * b[(perm[i], pj)];
        }
    }
    clamp_nonneg(s / (n * n) as f64)
}

/// Permutation test of independence.
///
/// Permutations of `Y`'s index order are generated sequentially from the
/// seed, then evaluated in parallel; `p = (1 + #{R²_π ≥ R²}) / (1 + n_perm)`.
pub fn permutation_test(
    x: &DcorInput,
    y: &DcorInput,
    n_perm: usize,
    seed: u64,
) -> Result<DcorResult> {
    if n_perm < MIN_PERMUTATIONS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_PERMUTATIONS} permutations, got {n_perm}"
        )));
    }
    if x.n() < 4 {
        return Err(Error::InvalidArgument(
            "permutation test needs n >= 4".into(),
        ));
    }
    let p = prepare(x, y)?;
    let n = p.a.nrows();
    let observed = v2_permuted(&p.a, &p.b, &(0..n).collect::<Vec<_>>());
    let r2 = r2_from(observed, p.v2_x, p.v2_y);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms: Vec<Vec<usize>> = (0..n_perm)
        .map(|_| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx
        })
        .collect();
    // R² is monotone in V² once the variances are fixed, so compare V².
    let threshold = observed - 1e-12 * observed.abs();
    let exceed = par::map_slice(&perms, |perm| v2_permuted(&p.a, &p.b, perm) >= threshold)
        .into_iter()
        .filter(|&b| b)
        .count();
    Ok(DcorResult {
        v2_xy: observed,
        v2_x: p.v2_x,
        v2_y: p.v2_y,
        r2,
        p_value: Some((1 + exceed) as f64 / (1 + n_perm) as f64),
        n_permutations: n_perm,
        seed,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    /// V_n² straight from the definition: every centered entry rebuilt from
    /// raw sums, no shared helpers.
    fn brute_force_v2(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        let nf = n as f64;
        let center = |m: &DMatrix<f64>, i: usize, j: usize| {
            let mut ri = 0.0;
            let mut cj = 0.0;
            let mut g = 0.0;
            for k in 0..n {
                ri += m[(i, k)];
                cj += m[(k, j)];
                for l in 0..n {
                    g += m[(k, l)];
                }
            }
            m[(i, j)] - ri / nf - cj / nf + g / (nf * nf)
        };
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += center(a, i, j) * center(b, i, j);
            }
        }
        s / (nf * nf)
    }

    #[test]
    fn double_center_two_points() {
        let d = 3.0;
        let c = double_center(&DMatrix::from_row_slice(2, 2, &[0.0, d, d, 0.0])).unwrap();
        assert_eq!(
            c.entries,
            DMatrix::from_row_slice(2, 2, &[-d / 2.0, d / 2.0, d / 2.0, -d / 2.0])
        );
        assert_eq!(c.grand_mean, d / 2.0);
    }

    #[test]
    fn double_center_zero_and_errors() {
        let c = double_center(&DMatrix::zeros(4, 4)).unwrap();
        assert!(c.entries.iter().all(|&v| v == 0.0));
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(double_center(&asym).is_err());
        assert!(double_center(&DMatrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn constant_shift_matches_recomputation() {
        let pts: Vec<Vec<f64>> = [0.0, 1.5, -2.0, 4.0, 0.3]
            .iter()
            .map(|&v| vec![v])
            .collect();
        let d = euclidean_distances(&pts).unwrap();
        let shift = 2.5;
        let shifted = DMatrix::from_fn(5, 5, |i, j| if i == j { 0.0 } else { d[(i, j)] + shift });
        let a = double_center(&d).unwrap().entries;
        let b = double_center(&shifted).unwrap().entries;
        // Only the diagonal pattern of the constant survives centering:
        // c(1 − 1ᵀ/n·…) leaves −c on the diagonal offset by c/n everywhere.
        let n = 5.0;
        for i in 0..5 {
            for j in 0..5 {
                let delta = if i == j { -shift } else { 0.0 } + shift / n;
                assert_relative_eq!(b[(i, j)] - a[(i, j)], delta, epsilon = 1e-12);
            }
        }
        for m in [&a, &b] {
            for i in 0..5 {
                assert!(m.row(i).sum().abs() < 1e-10 * 5.0 * m.amax());
                assert!(m.column(i).sum().abs() < 1e-10 * 5.0 * m.amax());
            }
        }
    }

    #[test]
    fn covariance_examples() {
        let dx = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
        let dy = DMatrix::from_row_slice(2, 2, &[0.0, 5.0, 5.0, 0.0]);
        assert_relative_eq!(
            distance_covariance(&dx, &dy).unwrap(),
            2.0 * 5.0 / 4.0,
            epsilon = 1e-15
        );
        assert_eq!(
            distance_covariance(&dx, &DMatrix::zeros(2, 2)).unwrap(),
            0.0
        );
        let pts: Vec<Vec<f64>> = [0.0, 1.0, 3.0, 7.0].iter().map(|&v| vec![v]).collect();
        let d = euclidean_distances(&pts).unwrap();
        let a = double_center(&d).unwrap().entries;
        let direct = a.iter().map(|v| v * v).sum::<f64>() / 16.0;
        assert_relative_eq!(
            distance_covariance(&d, &d).unwrap(),
            direct,
            epsilon = 1e-14
        );
        assert!(distance_covariance(&d, &dx).is_err());
    }

    #[test]
    fn correlation_examples() {
        let r = distance_correlation(
            &DcorInput::univariate(&[0.0, 1.0]),
            &DcorInput::univariate(&[5.0, -3.0]),
        )
        .unwrap();
        assert_relative_eq!(r.r2, 1.0, epsilon = 1e-15);

        let r = distance_correlation(
            &DcorInput::univariate(&[0.0, 1.0, 2.0]),
            &DcorInput::univariate(&[4.0; 3]),
        )
        .unwrap();
        assert_eq!((r.v2_y, r.r2), (0.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..20).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 7.0).collect();
        let r =
            distance_correlation(&DcorInput::univariate(&x), &DcorInput::univariate(&y)).unwrap();
        assert!((r.r2 - 1.0).abs() < 1e-10);

        assert!(distance_correlation(
            &DcorInput::univariate(&[1.0]),
            &DcorInput::univariate(&[1.0])
        )
        .is_err());
        assert!(distance_correlation(
            &DcorInput::univariate(&[1.0, 2.0]),
            &DcorInput::univariate(&[1.0, 2.0, 3.0])
        )
        .is_err());
    }

    #[test]
    fn permutation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let r = permutation_test(
            &DcorInput::univariate(&x),
            &DcorInput::univariate(&x),
            199,
            1,
        )
        .unwrap();
        assert_eq!(r.p_value, Some(1.0 / 200.0));

        let y: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let a = permutation_test(
            &DcorInput::univariate(&x),
            &DcorInput::univariate(&y),
            199,
            9,
        )
        .unwrap();
        let b = permutation_test(
            &DcorInput::univariate(&x),
            &DcorInput::univariate(&y),
            199,
            9,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.p_value.unwrap().to_bits(), b.p_value.unwrap().to_bits());

        assert!(permutation_test(
            &DcorInput::univariate(&x),
            &DcorInput::univariate(&y),
            98,
            9
        )
        .is_err());
        assert!(permutation_test(
            &DcorInput::univariate(&x[..3]),
            &DcorInput::univariate(&y[..3]),
            99,
            9
        )
        .is_err());
    }

    #[test]
    fn mmd_distances_plumb_through() {
        use crate::kernel::KernelSpec;
        use crate::mmd::{pairwise_density_distances, DistanceMetric};
        use crate::parzen::Sample;
        let samples: Vec<Sample> = (0..6)
            .map(|i| Sample::univariate(&[i as f64 * 0.3, i as f64 * 0.3 + 1.0]).unwrap())
            .collect();
        let dm = pairwise_density_distances(
            &samples,
            &KernelSpec::gaussian(1.0).unwrap(),
            DistanceMetric::RkhsNorm,
        )
        .unwrap();
        let y = [0.2, 0.1, 0.5, 0.4, 0.9, 1.0];
        let via_dm = distance_correlation(
            &DcorInput::from_distance_matrix(&dm).unwrap(),
            &DcorInput::univariate(&y),
        )
        .unwrap();
        let ydist = euclidean_distances(&y.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap();
        let via_raw = distance_correlation(
            &DcorInput::Distances(dm.entries().clone()),
            &DcorInput::Distances(ydist),
        )
        .unwrap();
        assert_eq!(via_dm.r2, via_raw.r2);
    }

    fn data(n: std::ops::RangeInclusive<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        n.prop_flat_map(move |n| prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n))
    }

    proptest! {
        #[test]
        fn brute_force_matches(x in data(2..=6, 2), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<Vec<f64>> = x.iter().map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
            let dx = euclidean_distances(&x).unwrap();
            let dy = euclidean_distances(&y).unwrap();
            prop_assert!((distance_covariance(&dx, &dy).unwrap() - brute_force_v2(&dx, &dy).max(0.0)).abs() < 1e-12);
        }

        #[test]
        fn r2_invariances(x in data(4..=15, 2), y in data(4..=15, 1), shift in -10.0f64..10.0, angle in 0.0f64..std::f64::consts::TAU, cx in 0.1f64..10.0, cy in 0.1f64..10.0) {
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            let base = distance_correlation(&DcorInput::Raw(x.to_vec()), &DcorInput::Raw(y.to_vec())).unwrap();
            prop_assert!((0.0..=1.0).contains(&base.r2));
            let rot: Vec<Vec<f64>> = x.iter().map(|p| vec![
                cx * (angle.cos() * p[0] - angle.sin() * p[1]) + shift,
                cx * (angle.sin() * p[0] + angle.cos() * p[1]) - shift,
            ]).collect();
            let ys: Vec<Vec<f64>> = y.iter().map(|p| vec![cy * p[0] + shift]).collect();
            let moved = distance_correlation(&DcorInput::Raw(rot), &DcorInput::Raw(ys)).unwrap();
            prop_assert!((base.r2 - moved.r2).abs() < 1e-12);
            let swapped = distance_correlation(&DcorInput::Raw(y.to_vec()), &DcorInput::Raw(x.to_vec())).unwrap();
            prop_assert_eq!(base.r2, swapped.r2);
        }
    }
}
