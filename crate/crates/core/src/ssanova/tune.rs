//! Smoothing parameter selection and cross-validated error.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fit::{
    fit_gram, fit_penalized_with, gaussian_system, prepare, unit_deviance, validate_lambda,
    validate_response, FitOptions,
};
use super::{Design, Loss, TermSpec};
use crate::{linalg, par, Error, Result};

/// Number of folds for Bernoulli tuning.
pub const CV_FOLDS: usize = 5;

/// `10^-7 … 10^1`, 25 log-spaced values.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..25).map(|k| 10f64.powf(-7.0 + k as f64 / 3.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub lambda: f64,
    /// `(λ, score)` for every grid value: GCV for Gaussian loss, mean
    /// held-out deviance for Bernoulli loss.
    pub scores: Vec<(f64, f64)>,
    pub criterion: String,
}

/// How λ is chosen inside [`cv_error`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Fixed(f64),
    Tuned(Vec<f64>),
}

/// Minimize GCV (Gaussian) or 5-fold CV deviance (Bernoulli) over `grid`.
/// Ties go to the larger λ.
pub fn tune_lambda(
    x: &Design,
    y: &[f64],
    terms: &[TermSpec],
    loss: Loss,
    grid: &[f64],
    seed: u64,
    opts: &FitOptions,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    for &l in grid {
        validate_lambda(l)?;
    }
    validate_response(y, x.n(), loss)?;
    let scores: Vec<f64> = if grid.len() == 1 {
        vec![f64::NAN]
    } else {
        match loss {
            Loss::Gaussian => {
                let gram = prepare(terms, x, opts.measure)?.training_gram();
                par::map_slice(grid, |&l| gcv_score(&gram, y, l))
                    .into_iter()
                    .collect::<Result<_>>()?
            }
            Loss::Bernoulli => {
                let folds = fold_assignment(x.n(), CV_FOLDS, seed);
                par::map_slice(grid, |&l| fold_loss(x, y, terms, loss, l, &folds, opts))
                    .into_iter()
                    .collect::<Result<_>>()?
            }
        }
    };
    let mut best = 0;
    for k in 1..grid.len() {
        let (s, b) = (scores[k], scores[best]);
        let better = s < b - 1e-12 * b.abs();
        let tie_larger = (s - b).abs() <= 1e-12 * b.abs() && grid[k] > grid[best];
        if better || tie_larger {
            best = k;
        }
    }
    Ok(TuneResult {
        lambda: grid[best],
        scores: grid.iter().copied().zip(scores).collect(),
        criterion: match loss {
            Loss::Gaussian => "gcv",
            Loss::Bernoulli => "cv_deviance",
        }
        .to_string(),
    })
}

/// `V(λ) = (1/n)‖(I − A)y‖² / [(1/n) tr(I − A)]²` where `A` maps `y` to the
/// fitted values `μ1 + Gc` of the bordered system.
pub(crate) fn gcv_score(gram: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<f64> {
    let n = y.len();
    let m = gaussian_system(gram, lambda);
    let mut rhs = DMatrix::zeros(n + 1, n);
    for i in 0..n {
        rhs[(i, i)] = 1.0;
    }
    let s = linalg::solve_many(&m, &rhs)?;
    let mut a = gram * s.rows(0, n);
    for j in 0..n {
        for i in 0..n {
            a[(i, j)] += s[(n, j)];
        }
    }
    let yv = DVector::from_column_slice(y);
    let resid = &yv - &a * &yv;
    let tr = n as f64 - a.trace();
    let nf = n as f64;
    Ok((resid.norm_squared() / nf) / (tr / nf).powi(2))
}

/// Seeded fold labels: a shuffled permutation dealt round-robin.
pub(crate) fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = k.min(n).max(1);
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    folds
}

/// Mean held-out deviance (squared error for Gaussian loss) at fixed λ.
fn fold_loss(
    x: &Design,
    y: &[f64],
    terms: &[TermSpec],
    loss: Loss,
    lambda: f64,
    folds: &[usize],
    opts: &FitOptions,
) -> Result<f64> {
    let k = folds.iter().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for fold in 0..k {
        let (train, test) = split(folds, fold);
        let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = fit_penalized_with(&x.subset(&train), &ytr, terms, lambda, loss, opts)?;
        let eta = model.predict_many(&x.subset(&test))?;
        total += test
            .iter()
            .zip(&eta)
            .map(|(&i, &e)| unit_deviance(loss, y[i], e))
            .sum::<f64>();
    }
    Ok(total / y.len() as f64)
}

fn split(folds: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    (0..folds.len()).partition(|&i| folds[i] != fold)
}

/// `folds`-fold cross-validated error: mean squared error for Gaussian loss,
/// mean deviance for Bernoulli. With [`LambdaChoice::Tuned`], λ is tuned on
/// each training fold separately.
pub fn cv_error(
    x: &Design,
    y: &[f64],
    terms: &[TermSpec],
    loss: Loss,
    lambda: &LambdaChoice,
    folds: usize,
    seed: u64,
) -> Result<f64> {
    validate_response(y, x.n(), loss)?;
    if folds < 2 || folds > x.n() {
        return Err(Error::InvalidArgument(format!(
            "folds must be in 2..={}, got {folds}",
            x.n()
        )));
    }
    let opts = FitOptions::default();
    let assignment = fold_assignment(x.n(), folds, seed);
    match lambda {
        LambdaChoice::Fixed(l) => {
            validate_lambda(*l)?;
            fold_loss(x, y, terms, loss, *l, &assignment, &opts)
        }
        LambdaChoice::Tuned(grid) => {
            let mut total = 0.0;
            for fold in 0..folds {
                let (train, test) = split(&assignment, fold);
                let xtr = x.subset(&train);
                let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                let l = tune_lambda(&xtr, &ytr, terms, loss, grid, seed, &opts)?.lambda;
                let kernel = prepare(terms, &xtr, opts.measure)?;
                let raw = fit_gram(&kernel.training_gram(), &ytr, l, loss, &opts)?;
                let model = super::SsanovaModel::from_raw(kernel, xtr, raw, l, loss);
                let eta = model.predict_many(&x.subset(&test))?;
                total += test
                    .iter()
                    .zip(&eta)
                    .map(|(&i, &e)| unit_deviance(loss, y[i], e))
                    .sum::<f64>();
            }
            Ok(total / y.len() as f64)
        }
    }
}
