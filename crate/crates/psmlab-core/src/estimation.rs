//! Post-matching effect estimation by ordinary least squares.
//!
//! The outcome is regressed on `[1, A, X_spec]` over the pooled matched
//! units (pair membership is ignored). The treatment coefficient is reported
//! with a model-based standard error, `s²(DᵀD)⁻¹`, and a
//! heteroskedasticity-robust sandwich standard error.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::matching::MatchedSample;
use crate::numerics::{Matrix, SpdMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelLabel {
    /// Treatment indicator only.
    MA,
    /// Treatment plus X₄ and X₅.
    MAX45,
    /// Treatment plus every covariate.
    MFull,
    Custom,
}

/// Outcome regression specification. Covariate indices are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    label: ModelLabel,
    covariates: Vec<usize>,
}

impl ModelSpec {
    pub fn ma() -> Self {
        ModelSpec {
            label: ModelLabel::MA,
            covariates: Vec::new(),
        }
    }

    pub fn max45() -> Self {
        ModelSpec {
            label: ModelLabel::MAX45,
            covariates: vec![4, 5],
        }
    }

    /// All covariates `1..=p`.
    pub fn mfull(p: usize) -> Self {
        ModelSpec {
            label: ModelLabel::MFull,
            covariates: (1..=p).collect(),
        }
    }

    pub fn custom(covariates: Vec<usize>) -> Result<Self> {
        if covariates.iter().any(|&c| c == 0) {
            return Err(Error::InvalidArgument("covariate indices are 1-based".into()));
        }
        let mut sorted = covariates.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("repeated covariate in {covariates:?}")));
        }
        Ok(ModelSpec {
            label: ModelLabel::Custom,
            covariates,
        })
    }

    pub fn label(&self) -> ModelLabel {
        self.label
    }

    pub fn covariates(&self) -> &[usize] {
        &self.covariates
    }

    /// Number of regression parameters (intercept, treatment, covariates).
    pub fn n_params(&self) -> usize {
        2 + self.covariates.len()
    }

    /// Display name: `MA`, `MAX45`, `MFull`, or `M(A,X1,X3)` for custom specs.
    pub fn name(&self) -> String {
        match self.label {
            ModelLabel::MA => "MA".into(),
            ModelLabel::MAX45 => "MAX45".into(),
            ModelLabel::MFull => "MFull".into(),
            ModelLabel::Custom => {
                let mut s = String::from("M(A");
                for c in &self.covariates {
                    s.push_str(&format!(",X{c}"));
                }
                s.push(')');
                s
            }
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SandwichKind {
    /// `(DᵀD)⁻¹ Dᵀ diag(e²) D (DᵀD)⁻¹`
    HC0,
    /// HC0 scaled by `n / (n − q)`.
    #[default]
    HC1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefs: Vec<f64>,
    /// `s² (DᵀD)⁻¹` with `s² = RSS / (n − q)`.
    pub model_cov: Matrix,
    pub residuals: Vec<f64>,
    pub sigma2: f64,
}

fn gram_inverse(design: &Matrix) -> Result<SpdMatrix> {
    let chol = design.weighted_gram(None)?.cholesky().map_err(|e| match e {
        Error::SingularMatrix { .. } => Error::RankDeficient,
        other => other,
    })?;
    Ok(chol.inverse())
}

fn check_shape(design: &Matrix, len: usize) -> Result<()> {
    if len != design.rows() {
        return Err(Error::DimensionMismatch {
            expected: design.rows(),
            got: len,
        });
    }
    if design.rows() <= design.cols() {
        return Err(Error::InsufficientRows {
            needed: design.cols() + 1,
            got: design.rows(),
        });
    }
    Ok(())
}

/// Least squares via Cholesky on the normal equations.
pub fn ols_fit(design: &Matrix, y: &[f64]) -> Result<OlsFit> {
    check_shape(design, y.len())?;
    let (n, q) = (design.rows(), design.cols());
    let gram = design.weighted_gram(None)?;
    let chol = gram.cholesky().map_err(|e| match e {
        Error::SingularMatrix { .. } => Error::RankDeficient,
        other => other,
    })?;
    let coefs = chol.solve(&design.transpose_mul_vec(y)?)?;
    let fitted = design.mul_vec(&coefs)?;
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(yi, fi)| yi - fi).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let sigma2 = rss / (n - q) as f64;
    let mut model_cov = chol.inverse().into_matrix();
    for i in 0..q {
        for j in 0..q {
            model_cov[(i, j)] *= sigma2;
        }
    }
    Ok(OlsFit {
        coefs,
        model_cov,
        residuals,
        sigma2,
    })
}

/// Heteroskedasticity-consistent covariance of OLS coefficients.
pub fn sandwich_cov(design: &Matrix, residuals: &[f64], kind: SandwichKind) -> Result<Matrix> {
    check_shape(design, residuals.len())?;
    let (n, q) = (design.rows(), design.cols());
    let bread = gram_inverse(design)?.into_matrix();
    let squared: Vec<f64> = residuals.iter().map(|e| e * e).collect();
    let meat = design.weighted_gram(Some(&squared))?.into_matrix();
    let mut cov = bread.matmul(&meat)?.matmul(&bread)?;
    let factor = match kind {
        SandwichKind::HC0 => 1.0,
        SandwichKind::HC1 => n as f64 / (n - q) as f64,
    };
    for i in 0..q {
        for j in 0..q {
            cov[(i, j)] *= factor;
        }
    }
    // symmetrize rounding from the two products
    for i in 0..q {
        for j in 0..i {
            let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = avg;
            cov[(j, i)] = avg;
        }
    }
    Ok(cov)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectEstimate {
    pub beta1_hat: f64,
    pub se_model: f64,
    pub se_sandwich: f64,
    pub n_used: usize,
    pub spec: ModelSpec,
}

/// Regresses `y` on `[1, A, X_spec]` over the listed units.
pub fn estimate_on_units(
    ds: &Dataset,
    units: &[usize],
    spec: &ModelSpec,
    kind: SandwichKind,
) -> Result<EffectEstimate> {
    if let Some(&bad) = spec.covariates().iter().find(|&&c| c > ds.p()) {
        return Err(Error::InvalidArgument(format!(
            "model {} uses X{bad} but the data have {} covariates",
            spec.name(),
            ds.p()
        )));
    }
    let q = spec.n_params();
    let mut data = Vec::with_capacity(units.len() * q);
    let mut y = Vec::with_capacity(units.len());
    for &i in units {
        data.push(1.0);
        data.push(if ds.treatment()[i] { 1.0 } else { 0.0 });
        let row = ds.x().row(i);
        data.extend(spec.covariates().iter().map(|&c| row[c - 1]));
        y.push(ds.y()[i]);
    }
    let design = Matrix::from_row_major(units.len(), q, data)?;
    let fit = ols_fit(&design, &y)?;
    let robust = sandwich_cov(&design, &fit.residuals, kind)?;
    Ok(EffectEstimate {
        beta1_hat: fit.coefs[1],
        se_model: libm::sqrt(fit.model_cov[(1, 1)]),
        se_sandwich: libm::sqrt(robust[(1, 1)]),
        n_used: units.len(),
        spec: spec.clone(),
    })
}

/// Treatment effect from the pooled matched units.
pub fn estimate_effect(m: &MatchedSample<'_>, spec: &ModelSpec, kind: SandwichKind) -> Result<EffectEstimate> {
    let q = spec.n_params();
    if 2 * m.n_pairs() <= q {
        return Err(Error::TooFewPairs {
            pairs: m.n_pairs(),
            params: q,
        });
    }
    estimate_on_units(m.source(), &m.units(), spec, kind)
}

/// Treatment effect from every unit of an unmatched dataset.
pub fn estimate_effect_unmatched(ds: &Dataset, spec: &ModelSpec, kind: SandwichKind) -> Result<EffectEstimate> {
    let units: Vec<usize> = (0..ds.n()).collect();
    estimate_on_units(ds, &units, spec, kind)
}

/// Largest estimate across a set of candidate models, with the spread of the
/// estimates (sample variance) as a model-dependence measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CherryPick {
    pub max_estimate: f64,
    /// Sample variance of the estimates; 0 when only one estimate exists.
    pub variance: f64,
    /// False when fewer than two estimates were supplied.
    pub variance_defined: bool,
}

/// Returns `None` for an empty list.
pub fn cherry_pick_max(estimates: &[EffectEstimate]) -> Option<CherryPick> {
    let values: Vec<f64> = estimates.iter().map(|e| e.beta1_hat).collect();
    let max_estimate = values.iter().copied().reduce(f64::max)?;
    let (variance, variance_defined) = match crate::numerics::sample_variance(&values) {
        Ok(v) => (v, true),
        Err(_) => (0.0, false),
    };
    Some(CherryPick {
        max_estimate,
        variance,
        variance_defined,
    })
}
