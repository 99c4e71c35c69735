//! Penalized likelihood fitting via the representer theorem.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::averaging::Measure;
use super::terms::{Scaling, TensorKernel};
use super::{validate_terms, Design, Loss, TermKind, TermSpec};
use crate::{linalg, Error, Result};

/// Linear predictors are clamped to this magnitude when the Bernoulli
/// likelihood has no finite maximizer.
pub const MAX_ABS_LOGIT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub measure: Measure,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            measure: Measure::EmpiricalMarginal,
            max_iter: 100,
            grad_tol: 1e-8,
        }
    }
}

/// A fitted model. Serializes with everything needed to predict: resolved
/// term specs, training design, scaling, coefficients and intercept.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SsanovaModel {
    pub terms: Vec<TermSpec>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub loss: Loss,
    pub measure: Measure,
    pub scaling: Scaling,
    pub training_points: Design,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(skip)]
    kernel: OnceLock<TensorKernel>,
}

/// ANOVA components of the linear predictor at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Components {
    pub intercept: f64,
    pub terms: Vec<(String, f64)>,
}

impl Components {
    pub fn total(&self) -> f64 {
        self.intercept + self.terms.iter().map(|(_, v)| v).sum::<f64>()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Deviance of one observation at linear predictor `eta`.
pub(crate) fn unit_deviance(loss: Loss, y: f64, eta: f64) -> f64 {
    match loss {
        Loss::Gaussian => (y - eta) * (y - eta),
        Loss::Bernoulli => 2.0 * (softplus(eta) - y * eta),
    }
}

/// `Dev(y, μ + Gc)/n + λ cᵀGc`, with squared error as the Gaussian deviance.
pub fn penalized_deviance(
    loss: Loss,
    gram: &DMatrix<f64>,
    y: &[f64],
    c: &DVector<f64>,
    mu: f64,
    lambda: f64,
) -> f64 {
    let n = y.len() as f64;
    let gc = gram * c;
    let dev: f64 = y
        .iter()
        .zip(gc.iter())
        .map(|(&yi, &f)| unit_deviance(loss, yi, mu + f))
        .sum();
    dev / n + lambda * c.dot(&gc)
}

/// Gradient of [`penalized_deviance`] with respect to `c` and `μ`.
pub fn penalized_deviance_gradient(
    loss: Loss,
    gram: &DMatrix<f64>,
    y: &[f64],
    c: &DVector<f64>,
    mu: f64,
    lambda: f64,
) -> (DVector<f64>, f64) {
    let n = y.len() as f64;
    let gc = gram * c;
    // d Dev_i / d eta_i, halved.
    let r = DVector::from_iterator(
        y.len(),
        y.iter().zip(gc.iter()).map(|(&yi, &f)| match loss {
            Loss::Gaussian => mu + f - yi,
            Loss::Bernoulli => sigmoid(mu + f) - yi,
        }),
    );
    let grad_c = (gram * &r) * (2.0 / n) + gc * (2.0 * lambda);
    let grad_mu = 2.0 * r.sum() / n;
    (grad_c, grad_mu)
}

fn grad_norm(
    loss: Loss,
    gram: &DMatrix<f64>,
    y: &[f64],
    c: &DVector<f64>,
    mu: f64,
    lambda: f64,
) -> f64 {
    let (gc, gm) = penalized_deviance_gradient(loss, gram, y, c, mu, lambda);
    (gc.norm_squared() + gm * gm).sqrt()
}

/// Solve `[A, b; 1ᵀ, 0][c; μ] = [rhs; 0]`.
fn bordered_solve(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    rhs: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    for i in 0..n {
        m[(i, n)] = b[i];
        m[(n, i)] = 1.0;
    }
    let mut r = DVector::zeros(n + 1);
    r.rows_mut(0, n).copy_from(rhs);
    let sol = linalg::solve(&m, &r)?;
    Ok((sol.rows(0, n).into_owned(), sol[n]))
}

/// The bordered Gaussian system matrix `[G + nλI, 1; 1ᵀ, 0]`.
pub(crate) fn gaussian_system(gram: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let n = gram.nrows();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(gram);
    for i in 0..n {
        m[(i, i)] += n as f64 * lambda;
        m[(i, n)] = 1.0;
        m[(n, i)] = 1.0;
    }
    m
}

pub(crate) struct RawFit {
    pub c: DVector<f64>,
    pub mu: f64,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

pub(crate) fn fit_gram(
    gram: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    loss: Loss,
    opts: &FitOptions,
) -> Result<RawFit> {
    match loss {
        Loss::Gaussian => {
            let m = gaussian_system(gram, lambda);
            let mut r = DVector::zeros(y.len() + 1);
            for (i, &v) in y.iter().enumerate() {
                r[i] = v;
            }
            let sol = linalg::solve(&m, &r)?;
            let n = y.len();
            Ok(RawFit {
                c: sol.rows(0, n).into_owned(),
                mu: sol[n],
                converged: true,
                iterations: 1,
                warnings: Vec::new(),
            })
        }
        Loss::Bernoulli => fit_bernoulli(gram, y, lambda, opts),
    }
}

fn fit_bernoulli(gram: &DMatrix<f64>, y: &[f64], lambda: f64, opts: &FitOptions) -> Result<RawFit> {
    let n = y.len();
    let ybar = y.iter().sum::<f64>() / n as f64;
    if ybar == 0.0 || ybar == 1.0 {
        let mu = if ybar == 1.0 {
            MAX_ABS_LOGIT
        } else {
            -MAX_ABS_LOGIT
        };
        log::warn!("complete separation: all responses are {ybar}; intercept clamped to {mu}");
        return Ok(RawFit {
            c: DVector::zeros(n),
            mu,
            converged: false,
            iterations: 0,
            warnings: vec![format!(
                "complete separation: all responses equal {ybar}, intercept diverges and was clamped to {mu}"
            )],
        });
    }
    let objective =
        |c: &DVector<f64>, mu: f64| penalized_deviance(Loss::Bernoulli, gram, y, c, mu, lambda);
    let ones = DVector::from_element(n, 1.0);
    let mut c = DVector::zeros(n);
    let mut mu = (ybar / (1.0 - ybar)).ln();
    let mut f = objective(&c, mu);
    let mut warnings = Vec::new();
    let nl = n as f64 * lambda;

    for iter in 1..=opts.max_iter {
        let eta = gram * &c + &ones * mu;
        let p = eta.map(sigmoid);
        let w = p.map(|pi| pi * (1.0 - pi));
        let mut a = gram.clone();
        for i in 0..n {
            a.row_mut(i).scale_mut(w[i]);
            a[(i, i)] += nl;
        }
        // W z = W η + (y − p).
        let rhs = DVector::from_iterator(n, (0..n).map(|i| w[i] * eta[i] + y[i] - p[i]));
        let (c_new, mu_new) = bordered_solve(&a, &w, &rhs)?;

        // Damped Newton: halve the step until the objective does not rise.
        let (dc, dmu) = (&c_new - &c, mu_new - mu);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let (ct, mt) = (&c + &dc * t, mu + dmu * t);
            let ft = objective(&ct, mt);
            if ft.is_finite() && ft <= f + 1e-14 * f.abs().max(1.0) {
                c = ct;
                mu = mt;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if mu.abs() > MAX_ABS_LOGIT {
            mu = mu.clamp(-MAX_ABS_LOGIT, MAX_ABS_LOGIT);
            let msg = format!("intercept diverging; clamped to {mu}");
            log::warn!("{msg}");
            warnings.push(msg);
            return Ok(RawFit {
                c,
                mu,
                converged: false,
                iterations: iter,
                warnings,
            });
        }
        let g = grad_norm(Loss::Bernoulli, gram, y, &c, mu, lambda);
        if g < opts.grad_tol {
            return Ok(RawFit {
                c,
                mu,
                converged: true,
                iterations: iter,
                warnings,
            });
        }
        if !accepted {
            break;
        }
    }
    let msg = format!(
        "IRLS did not reach gradient norm {} within {} iterations",
        opts.grad_tol, opts.max_iter
    );
    log::warn!("{msg}");
    warnings.push(msg);
    Ok(RawFit {
        c,
        mu,
        converged: false,
        iterations: opts.max_iter,
        warnings,
    })
}

pub(crate) fn validate_response(y: &[f64], n: usize, loss: Loss) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 observations, got {n}"
        )));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("responses must be finite".into()));
    }
    if loss == Loss::Bernoulli && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(
            "bernoulli responses must be 0 or 1".into(),
        ));
    }
    Ok(())
}

pub(crate) fn validate_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "lambda must be finite and > 0, got {lambda}"
        )))
    }
}

pub(crate) fn prepare(terms: &[TermSpec], x: &Design, measure: Measure) -> Result<TensorKernel> {
    validate_terms(terms)?;
    TensorKernel::build(terms, x, measure)
}

pub fn fit_penalized(
    x: &Design,
    y: &[f64],
    terms: &[TermSpec],
    lambda: f64,
    loss: Loss,
) -> Result<SsanovaModel> {
    fit_penalized_with(x, y, terms, lambda, loss, &FitOptions::default())
}

pub fn fit_penalized_with(
    x: &Design,
    y: &[f64],
    terms: &[TermSpec],
    lambda: f64,
    loss: Loss,
    opts: &FitOptions,
) -> Result<SsanovaModel> {
    validate_response(y, x.n(), loss)?;
    validate_lambda(lambda)?;
    let kernel = prepare(terms, x, opts.measure)?;
    let gram = kernel.training_gram();
    let raw = fit_gram(&gram, y, lambda, loss, opts)?;
    Ok(SsanovaModel::from_raw(kernel, x.clone(), raw, lambda, loss))
}

impl SsanovaModel {
    pub(crate) fn from_raw(
        kernel: TensorKernel,
        x: Design,
        raw: RawFit,
        lambda: f64,
        loss: Loss,
    ) -> Self {
        let model = SsanovaModel {
            terms: kernel.terms(),
            coefficients: raw.c.iter().copied().collect(),
            intercept: raw.mu,
            lambda,
            loss,
            measure: kernel.measure(),
            scaling: kernel.scaling().clone(),
            training_points: x,
            converged: raw.converged,
            iterations: raw.iterations,
            warnings: raw.warnings,
            kernel: OnceLock::new(),
        };
        let _ = model.kernel.set(kernel);
        model
    }

    /// The composite kernel, rebuilt from the stored terms after loading.
    pub fn kernel(&self) -> Result<&TensorKernel> {
        if let Some(k) = self.kernel.get() {
            return Ok(k);
        }
        let k = TensorKernel::build(&self.terms, &self.training_points, self.measure)?;
        if k.scaling() != &self.scaling {
            return Err(Error::InvalidArgument(
                "stored scaling does not match the training points".into(),
            ));
        }
        Ok(self.kernel.get_or_init(|| k))
    }

    pub fn n(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficient_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }

    /// Components at every point of `design`.
    pub fn components_many(&self, design: &Design) -> Result<Vec<Components>> {
        let grams = self.kernel()?.term_grams(design)?;
        let c = self.coefficient_vector();
        let values: Vec<(String, DVector<f64>)> =
            grams.into_iter().map(|(name, g)| (name, g * &c)).collect();
        Ok((0..design.n())
            .map(|i| Components {
                intercept: self.intercept,
                terms: values
                    .iter()
                    .map(|(name, v)| (name.clone(), v[i]))
                    .collect(),
            })
            .collect())
    }

    /// Linear predictor at every point of `design`; the sum of the components.
    pub fn predict_many(&self, design: &Design) -> Result<Vec<f64>> {
        Ok(self
            .components_many(design)?
            .iter()
            .map(Components::total)
            .collect())
    }

    /// Success probabilities for a Bernoulli model (the identity otherwise).
    pub fn response_many(&self, design: &Design) -> Result<Vec<f64>> {
        let eta = self.predict_many(design)?;
        Ok(match self.loss {
            Loss::Gaussian => eta,
            Loss::Bernoulli => eta.into_iter().map(sigmoid).collect(),
        })
    }

    pub fn has_density_terms(&self) -> bool {
        self.terms.iter().any(|t| t.kind.uses_density())
    }

    pub fn is_constant_only(&self) -> bool {
        self.terms.iter().all(|t| t.kind == TermKind::Constant)
    }
}

/// Linear predictor of `model` at a single point.
pub fn predict(model: &SsanovaModel, t: &Design) -> Result<f64> {
    single(t)?;
    Ok(model.predict_many(t)?[0])
}

/// ANOVA components of `model` at a single point.
pub fn anova_components(model: &SsanovaModel, t: &Design) -> Result<Components> {
    single(t)?;
    Ok(model.components_many(t)?.remove(0))
}

fn single(t: &Design) -> Result<()> {
    if t.n() == 1 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "expected a single point, got {}",
            t.n()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_design(n: usize, seed: u64) -> (Design, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        (
            Design::new(vec!["x1".into(), "x2".into()], rows, None).unwrap(),
            rng,
        )
    }

    fn three_terms() -> Vec<TermSpec> {
        vec![
            TermSpec::main_effect("x1"),
            TermSpec::main_effect("x2"),
            TermSpec::interaction("x1", "x2"),
        ]
    }

    #[test]
    fn large_lambda_collapses_to_mean() {
        let (d, mut rng) = random_design(30, 1);
        let y: Vec<f64> = d
            .rows()
            .iter()
            .map(|r| (6.0 * r[0]).sin() + rng.random::<f64>())
            .collect();
        let m = fit_penalized(&d, &y, &three_terms(), 1e8, Loss::Gaussian).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let probe = random_design(50, 2).0;
        for p in m.predict_many(&probe).unwrap() {
            assert!((p - mean).abs() < 1e-4);
        }
    }

    #[test]
    fn two_point_system_residual() {
        let d = Design::new(vec!["x".into()], vec![vec![0.2], vec![0.9]], None).unwrap();
        let y = [1.0, 3.0];
        let lambda = 0.1;
        let m = fit_penalized(
            &d,
            &y,
            &[TermSpec::main_effect("x")],
            lambda,
            Loss::Gaussian,
        )
        .unwrap();
        let g = m.kernel().unwrap().training_gram();
        let c = m.coefficient_vector();
        let r = (&g + DMatrix::identity(2, 2) * (2.0 * lambda)) * &c
            + DVector::from_element(2, m.intercept)
            - DVector::from_column_slice(&y);
        assert!(r.norm() < 1e-12);
        assert!(c.sum().abs() < 1e-12);
        // By hand: scaled points are 0 and 1, so G = [[h, −h], [−h, h]] with
        // h = (1 − e^{−2})/2 under sigma 0.5; then μ = 2 and c = ±1/(2h + 0.2).
        let h = 0.5 * (1.0 - (-2.0f64).exp());
        assert_relative_eq!(m.intercept, 2.0, epsilon = 1e-12);
        assert_relative_eq!(c[1], 1.0 / (2.0 * h + 0.2), epsilon = 1e-12);
    }

    #[test]
    fn all_ones_bernoulli_is_clamped_with_warning() {
        let (d, _) = random_design(10, 3);
        let m = fit_penalized(&d, &[1.0; 10], &three_terms(), 1e-2, Loss::Bernoulli).unwrap();
        assert_eq!(m.intercept, MAX_ABS_LOGIT);
        assert!(!m.converged);
        assert!(m.warnings[0].contains("complete separation"));
    }

    #[test]
    fn constant_only_predicts_intercept() {
        let (d, _) = random_design(8, 4);
        let y: Vec<f64> = (0..8).map(f64::from).collect();
        let m = fit_penalized(&d, &y, &[TermSpec::constant()], 0.5, Loss::Gaussian).unwrap();
        assert_relative_eq!(m.intercept, 3.5, epsilon = 1e-12);
        for p in m.predict_many(&random_design(5, 5).0).unwrap() {
            assert_eq!(p, m.intercept);
        }
    }

    #[test]
    fn near_interpolation_at_small_lambda() {
        let (d, mut rng) = random_design(15, 6);
        let y: Vec<f64> = (0..15).map(|_| rng.random::<f64>()).collect();
        let m = fit_penalized(&d, &y, &three_terms(), 1e-8, Loss::Gaussian).unwrap();
        // Direct solve of the same system as an independent check.
        let g = m.kernel().unwrap().training_gram();
        let sys = gaussian_system(&g, 1e-8);
        let rhs = DVector::from_iterator(16, y.iter().copied().chain([0.0]));
        let direct = sys.lu().solve(&rhs).unwrap();
        let pred = m.predict_many(&d).unwrap();
        for i in 0..15 {
            assert!((pred[i] - y[i]).abs() < 1e-3);
            assert_relative_eq!(
                m.coefficients[i],
                direct[i],
                max_relative = 1e-8,
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn side_conditions_and_additivity() {
        let (d, mut rng) = random_design(40, 7);
        let y: Vec<f64> = d
            .rows()
            .iter()
            .map(|r| r[0] * r[1] + 0.1 * rng.random::<f64>())
            .collect();
        let m = fit_penalized(&d, &y, &three_terms(), 1e-3, Loss::Gaussian).unwrap();
        let comps = m.components_many(&d).unwrap();
        let pred = m.predict_many(&d).unwrap();
        for name in ["x1", "x2"] {
            let mean: f64 = comps.iter().map(|c| c.get(name).unwrap()).sum::<f64>() / 40.0;
            assert!(mean.abs() < 1e-8, "{name}: {mean}");
        }
        for (c, p) in comps.iter().zip(&pred) {
            assert!((c.total() - p).abs() < 1e-10);
        }
        // Interaction averages to zero over each training marginal.
        let grid: Vec<Vec<f64>> = d
            .rows()
            .iter()
            .flat_map(|a| d.rows().iter().map(move |b| vec![a[0], b[1]]))
            .collect();
        let full = Design::new(d.names().to_vec(), grid, None).unwrap();
        let inter: Vec<f64> = m
            .components_many(&full)
            .unwrap()
            .iter()
            .map(|c| c.get("x1:x2").unwrap())
            .collect();
        for a in 0..40 {
            let over_x2: f64 = (0..40).map(|b| inter[a * 40 + b]).sum::<f64>() / 40.0;
            let over_x1: f64 = (0..40).map(|b| inter[b * 40 + a]).sum::<f64>() / 40.0;
            assert!(over_x2.abs() < 1e-8 && over_x1.abs() < 1e-8);
        }
    }

    #[test]
    fn representer_solution_is_a_minimum() {
        let (d, mut rng) = random_design(25, 8);
        let y: Vec<f64> = d
            .rows()
            .iter()
            .map(|r| (3.0 * r[0]).cos() + rng.random::<f64>())
            .collect();
        let lambda = 1e-3;
        let m = fit_penalized(&d, &y, &three_terms(), lambda, Loss::Gaussian).unwrap();
        let g = m.kernel().unwrap().training_gram();
        let c = m.coefficient_vector();
        let f0 = penalized_deviance(Loss::Gaussian, &g, &y, &c, m.intercept, lambda);
        for _ in 0..100 {
            let mut delta = DVector::from_fn(25, |_, _| rng.random::<f64>() - 0.5);
            delta *= 1e-3 / delta.norm();
            let f = penalized_deviance(Loss::Gaussian, &g, &y, &(&c + delta), m.intercept, lambda);
            assert!(f >= f0 - 1e-15 * f0.abs());
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (d, mut rng) = random_design(20, 9);
        let y: Vec<f64> = (0..20).map(|_| f64::from(rng.random::<bool>())).collect();
        let tk = prepare(&three_terms(), &d, Measure::EmpiricalMarginal).unwrap();
        let g = tk.training_gram();
        let lambda = 1e-2;
        for loss in [Loss::Gaussian, Loss::Bernoulli] {
            for _ in 0..20 {
                let c = DVector::from_fn(20, |_, _| 2.0 * rng.random::<f64>() - 1.0);
                let mu = rng.random::<f64>() - 0.5;
                let (gc, gm) = penalized_deviance_gradient(loss, &g, &y, &c, mu, lambda);
                let h = 1e-6;
                let f = |c: &DVector<f64>, mu: f64| penalized_deviance(loss, &g, &y, c, mu, lambda);
                let mut fd = DVector::zeros(21);
                for k in 0..20 {
                    let mut cp = c.clone();
                    let mut cm = c.clone();
                    cp[k] += h;
                    cm[k] -= h;
                    fd[k] = (f(&cp, mu) - f(&cm, mu)) / (2.0 * h);
                }
                fd[20] = (f(&c, mu + h) - f(&c, mu - h)) / (2.0 * h);
                let an = DVector::from_iterator(21, gc.iter().copied().chain([gm]));
                assert!((an.clone() - fd).norm() / an.norm() < 1e-5);
            }
        }
    }

    #[test]
    fn bernoulli_converges_and_separates_classes() {
        let (d, _) = random_design(60, 10);
        let y: Vec<f64> = d.rows().iter().map(|r| f64::from(r[0] > 0.5)).collect();
        let m = fit_penalized(&d, &y, &three_terms(), 1e-3, Loss::Bernoulli).unwrap();
        assert!(m.converged, "{:?}", m.warnings);
        let g = m.kernel().unwrap().training_gram();
        assert!(
            grad_norm(
                Loss::Bernoulli,
                &g,
                &y,
                &m.coefficient_vector(),
                m.intercept,
                1e-3
            ) < 1e-8
        );
        let p = m.response_many(&d).unwrap();
        let correct = p
            .iter()
            .zip(&y)
            .filter(|(p, y)| (**p > 0.5) == (**y == 1.0))
            .count();
        assert!(correct >= 54);
    }

    #[test]
    fn serde_round_trip_predicts_identically() {
        let (d, mut rng) = random_design(12, 11);
        let z: Vec<Vec<f64>> = (0..12)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let d = Design::new(d.names().to_vec(), d.rows().to_vec(), Some(z)).unwrap();
        let y: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
        let terms = vec![
            TermSpec::main_effect("x1"),
            TermSpec::density_interaction("x2"),
        ];
        let m = fit_penalized(&d, &y, &terms, 1e-2, Loss::Gaussian).unwrap();
        let back: SsanovaModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(m.predict_many(&d).unwrap(), back.predict_many(&d).unwrap());
    }

    #[test]
    fn prediction_errors() {
        let (d, _) = random_design(6, 12);
        let y = [0.0, 1.0, 0.5, 0.2, 0.9, 0.3];
        let m = fit_penalized(&d, &y, &three_terms(), 1e-2, Loss::Gaussian).unwrap();
        let missing = Design::new(vec!["x1".into()], vec![vec![0.5]], None).unwrap();
        assert!(predict(&m, &missing).is_err());
        assert!(fit_penalized(&d, &y[..5], &three_terms(), 1e-2, Loss::Gaussian).is_err());
        assert!(fit_penalized(&d, &y, &three_terms(), 0.0, Loss::Gaussian).is_err());
        assert!(fit_penalized(&d, &y, &three_terms(), 1e-2, Loss::Bernoulli).is_err());
        let one = d.subset(&[0]);
        assert!(fit_penalized(&one, &y[..1], &three_terms(), 1e-2, Loss::Gaussian).is_err());
        let comps = anova_components(&m, &d.subset(&[2])).unwrap();
        assert_relative_eq!(
            comps.total(),
            predict(&m, &d.subset(&[2])).unwrap(),
            epsilon = 1e-15
        );
    }
}
