//! Smoothing spline ANOVA models over tensor-product kernels.
//!
//! A model is `f(t) = μ + Σ_i c_i K_total(x_i, t)` where `K_total` is a
//! weighted sum of products of centered covariate kernels and, optionally,
//! an uncentered rbf kernel over density pseudo-attributes. Coefficients
//! minimize `C(y, f)/n + λ cᵀGc`, which puts `nλ` on the diagonal of the
//! linear systems.

mod averaging;
mod fit;
mod terms;
mod tune;

pub use averaging::{
    anova_decompose, center_kernel, AveragingOperator, CenteredKernel, GridFunction, Measure,
};
pub use fit::{
    anova_components, fit_penalized, fit_penalized_with, penalized_deviance,
    penalized_deviance_gradient, predict, Components, FitOptions, SsanovaModel, MAX_ABS_LOGIT,
};
pub use terms::{build_tensor_kernel, Scaling, TensorKernel};
pub use tune::{cv_error, default_lambda_grid, tune_lambda, LambdaChoice, TuneResult};

use serde::{Deserialize, Serialize};

use crate::{Error, KernelSpec, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Gaussian,
    Bernoulli,
}

impl std::str::FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Loss::Gaussian),
            "bernoulli" => Ok(Loss::Bernoulli),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss `{other}` (expected gaussian or bernoulli)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Constant,
    MainEffect,
    Interaction,
    DensityMain,
    DensityInteraction,
}

impl TermKind {
    fn n_vars(self) -> usize {
        match self {
            TermKind::Constant | TermKind::DensityMain => 0,
            TermKind::MainEffect | TermKind::DensityInteraction => 1,
            TermKind::Interaction => 2,
        }
    }

    pub fn uses_density(self) -> bool {
        matches!(self, TermKind::DensityMain | TermKind::DensityInteraction)
    }
}

/// One term of the model.
///
/// `vars` names the covariates involved. `kernels` is either empty (use
/// defaults) or has one entry per factor: the covariates in order, then the
/// density kernel for density terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub kind: TermKind,
    #[serde(default)]
    pub vars: Vec<String>,
    #[serde(default)]
    pub kernels: Vec<KernelSpec>,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    1.0
}

impl TermSpec {
    pub fn constant() -> Self {
        Self::new(TermKind::Constant, &[])
    }

    pub fn main_effect(var: &str) -> Self {
        Self::new(TermKind::MainEffect, &[var])
    }

    pub fn interaction(a: &str, b: &str) -> Self {
        Self::new(TermKind::Interaction, &[a, b])
    }

    pub fn density_main() -> Self {
        Self::new(TermKind::DensityMain, &[])
    }

    pub fn density_interaction(var: &str) -> Self {
        Self::new(TermKind::DensityInteraction, &[var])
    }

    fn new(kind: TermKind, vars: &[&str]) -> Self {
        TermSpec {
            kind,
            vars: vars.iter().map(|s| s.to_string()).collect(),
            kernels: Vec::new(),
            theta: 1.0,
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_kernels(mut self, kernels: Vec<KernelSpec>) -> Self {
        self.kernels = kernels;
        self
    }

    /// Display name, e.g. `x1`, `x1:x2`, `dens`, `x1:dens`.
    pub fn name(&self) -> String {
        match self.kind {
            TermKind::Constant => "const".to_string(),
            TermKind::MainEffect | TermKind::Interaction => self.vars.join(":"),
            TermKind::DensityMain => "dens".to_string(),
            TermKind::DensityInteraction => format!("{}:dens", self.vars[0]),
        }
    }

    fn n_factors(&self) -> usize {
        self.kind.n_vars() + usize::from(self.kind.uses_density())
    }

    fn validate_shape(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTerms(msg));
        if self.vars.len() != self.kind.n_vars() {
            return bad(format!(
                "{:?} term takes {} variable(s), got {}",
                self.kind,
                self.kind.n_vars(),
                self.vars.len()
            ));
        }
        if self.kind == TermKind::Interaction && self.vars[0] == self.vars[1] {
            return bad(format!("interaction of `{}` with itself", self.vars[0]));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return bad(format!("theta must be finite and > 0, got {}", self.theta));
        }
        if self.kind == TermKind::Constant && !self.kernels.is_empty() {
            return bad("constant term takes no kernels".into());
        }
        if !self.kernels.is_empty() && self.kernels.len() != self.n_factors() {
            return bad(format!(
                "term `{}` needs {} kernel(s), got {}",
                self.name(),
                self.n_factors(),
                self.kernels.len()
            ));
        }
        Ok(())
    }

    fn key(&self) -> (TermKind, Vec<String>) {
        let mut vars = self.vars.clone();
        vars.sort();
        (self.kind, vars)
    }
}

/// Design points: named covariates per row and optional pseudo-attribute
/// rows aligned with them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    #[serde(default)]
    pseudo: Option<Vec<Vec<f64>>>,
}

impl Design {
    pub fn new(
        names: Vec<String>,
        rows: Vec<Vec<f64>>,
        pseudo: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for name in &names {
            if !seen.insert(name) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate covariate `{name}`"
                )));
            }
        }
        for row in &rows {
            if row.len() != names.len() {
                return Err(Error::DimensionMismatch {
                    expected: names.len(),
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("covariates must be finite".into()));
            }
        }
        if let Some(z) = &pseudo {
            if z.len() != rows.len() {
                return Err(Error::DimensionMismatch {
                    expected: rows.len(),
                    got: z.len(),
                });
            }
            let r = z.first().map_or(0, Vec::len);
            if r == 0 && !z.is_empty() {
                return Err(Error::InvalidArgument(
                    "pseudo-attributes have no columns".into(),
                ));
            }
            for row in z {
                if row.len() != r {
                    return Err(Error::DimensionMismatch {
                        expected: r,
                        got: row.len(),
                    });
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(
                        "pseudo-attributes must be finite".into(),
                    ));
                }
            }
        }
        Ok(Design {
            names,
            rows,
            pseudo,
        })
    }

    /// Pseudo-attributes only, no covariates.
    pub fn from_pseudo(pseudo: Vec<Vec<f64>>) -> Result<Self> {
        let n = pseudo.len();
        Self::new(Vec::new(), vec![Vec::new(); n], Some(pseudo))
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn pseudo(&self) -> Option<&[Vec<f64>]> {
        self.pseudo.as_deref()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// The rows with the given indices.
    pub fn subset(&self, idx: &[usize]) -> Design {
        Design {
            names: self.names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            pseudo: self
                .pseudo
                .as_ref()
                .map(|z| idx.iter().map(|&i| z[i].clone()).collect()),
        }
    }

    pub fn without_pseudo(&self) -> Design {
        Design {
            names: self.names.clone(),
            rows: self.rows.clone(),
            pseudo: None,
        }
    }
}

/// Structural checks on a term list: shapes, thetas and duplicates.
pub fn validate_term_list(terms: &[TermSpec]) -> Result<()> {
    validate_terms(terms)
}

fn validate_terms(terms: &[TermSpec]) -> Result<()> {
    if terms.is_empty() {
        return Err(Error::InvalidTerms("no terms".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for t in terms {
        t.validate_shape()?;
        if !seen.insert(t.key()) {
            return Err(Error::InvalidTerms(format!(
                "duplicate term `{}`",
                t.name()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn term_json_round_trip() {
        let json = r#"[{"kind": "main_effect", "vars": ["x"]},
                       {"kind": "density_main", "kernels": [{"family": "gaussian_rbf", "params": {"sigma": 0.5}}], "theta": 2.0}]"#;
        let terms: Vec<TermSpec> = serde_json::from_str(json).unwrap();
        assert_eq!(terms[0], TermSpec::main_effect("x"));
        assert_eq!(terms[1].theta, 2.0);
        assert_eq!(terms[1].name(), "dens");
        let back: Vec<TermSpec> =
            serde_json::from_str(&serde_json::to_string(&terms).unwrap()).unwrap();
        assert_eq!(back, terms);
        assert!(serde_json::from_str::<TermSpec>(r#"{"kind": "cubic"}"#).is_err());
    }

    #[test]
    fn term_validation() {
        assert!(validate_terms(&[]).is_err());
        assert!(validate_terms(&[TermSpec::main_effect("x"), TermSpec::main_effect("x")]).is_err());
        assert!(validate_terms(&[
            TermSpec::interaction("x", "y"),
            TermSpec::interaction("y", "x")
        ])
        .is_err());
        assert!(validate_terms(&[TermSpec::interaction("x", "x")]).is_err());
        assert!(validate_terms(&[TermSpec::main_effect("x").with_theta(0.0)]).is_err());
        assert!(validate_terms(&[TermSpec::new(TermKind::MainEffect, &[])]).is_err());
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert!(
            validate_terms(&[TermSpec::main_effect("x").with_kernels(vec![k.clone(), k])]).is_err()
        );
        assert!(
            validate_terms(&[TermSpec::main_effect("x"), TermSpec::interaction("x", "y")]).is_ok()
        );
    }

    #[test]
    fn design_validation() {
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(Design::new(names.clone(), vec![vec![1.0]], None).is_err());
        assert!(Design::new(names.clone(), vec![vec![1.0, f64::NAN]], None).is_err());
        assert!(Design::new(vec!["a".into(), "a".into()], vec![], None).is_err());
        assert!(Design::new(names.clone(), vec![vec![1.0, 2.0]], Some(vec![])).is_err());
        let d = Design::new(
            names,
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            Some(vec![vec![0.0], vec![1.0]]),
        )
        .unwrap();
        assert_eq!(d.column("b").unwrap(), vec![2.0, 4.0]);
        assert_eq!(d.subset(&[1]).pseudo().unwrap(), &[vec![1.0]]);
    }
}
