//! Covariate balance diagnostics for a matched sample.
//!
//! Both Mahalanobis metrics use a covariance `Σ` fixed before matching (the
//! full pre-match sample), so values are comparable across calipers. The
//! standardized mean difference keeps its sign; the distance metrics do not,
//! which is why they cannot average out chance imbalance across pairs.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matching::MatchedSample;
use crate::numerics::{sample_variance, Cholesky, SpdMatrix};
use crate::propensity::{c_statistic, fit_logistic, PropensityFit};

/// Rule-of-thumb threshold on |SMD| for calling a covariate imbalanced.
pub const SMD_IMBALANCE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    /// Signed SMD per covariate. An entry is ±∞ when both groups have zero
    /// variance but different means.
    pub smd: Vec<f64>,
    pub mahalanobis_means: f64,
    pub pairwise_ix: f64,
    /// AUC of a logistic model refitted on the matched units; `None` when no
    /// refit was supplied.
    pub c_stat: Option<f64>,
    pub n_pairs: usize,
}

impl BalanceReport {
    pub fn proportion_imbalanced(&self) -> f64 {
        let over = self.smd.iter().filter(|d| d.abs() > SMD_IMBALANCE_THRESHOLD).count();
        over as f64 / self.smd.len() as f64
    }
}

/// `(x̄₁ − x̄₀) / √((s₁² + s₀²) / 2)`.
///
/// Returns 0 when both variances are zero and the means agree, and
/// [`Error::ZeroVariance`] (reported for covariate 0) when they differ.
pub fn standardized_mean_difference(treated: &[f64], control: &[f64]) -> Result<f64> {
    let s1 = sample_variance(treated)?;
    let s0 = sample_variance(control)?;
    let m1 = treated.iter().sum::<f64>() / treated.len() as f64;
    let m0 = control.iter().sum::<f64>() / control.len() as f64;
    let pooled = (s1 + s0) / 2.0;
    if pooled == 0.0 {
        return if m1 == m0 {
            Ok(0.0)
        } else {
            Err(Error::ZeroVariance { covariate: 0 })
        };
    }
    Ok((m1 - m0) / libm::sqrt(pooled))
}

fn group_columns(m: &MatchedSample<'_>, j: usize) -> (Vec<f64>, Vec<f64>) {
    let x = m.source().x();
    let treated = m.pairs().iter().map(|p| x[(p.treated, j)]).collect();
    let control = m.pairs().iter().map(|p| x[(p.control, j)]).collect();
    (treated, control)
}

fn check_covariate(m: &MatchedSample<'_>, j: usize) -> Result<()> {
    if j >= m.source().p() {
        return Err(Error::InvalidArgument(alloc::format!(
            "covariate index {j} out of range for {} covariates",
            m.source().p()
        )));
    }
    Ok(())
}

/// SMD of covariate `j` (0-based) over the matched units.
pub fn smd(m: &MatchedSample<'_>, j: usize) -> Result<f64> {
    check_covariate(m, j)?;
    if m.n_pairs() < 2 {
        return Err(Error::TooFewPairs {
            pairs: m.n_pairs(),
            params: 2,
        });
    }
    let (t, c) = group_columns(m, j);
    standardized_mean_difference(&t, &c).map_err(|e| match e {
        Error::ZeroVariance { .. } => Error::ZeroVariance { covariate: j },
        other => other,
    })
}

fn factor_for(m: &MatchedSample<'_>, sigma: &SpdMatrix) -> Result<Cholesky> {
    if sigma.dim() != m.source().p() {
        return Err(Error::DimensionMismatch {
            expected: m.source().p(),
            got: sigma.dim(),
        });
    }
    sigma.cholesky()
}

/// Mahalanobis distance between the treated and control covariate means.
pub fn mahalanobis_means(m: &MatchedSample<'_>, sigma: &SpdMatrix) -> Result<f64> {
    let chol = factor_for(m, sigma)?;
    if m.n_pairs() == 0 {
        return Err(Error::NoPairsFormed);
    }
    let p = m.source().p();
    let x = m.source().x();
    let mut gap = alloc::vec![0.0; p];
    for pair in m.pairs() {
        for (j, g) in gap.iter_mut().enumerate() {
            *g += x[(pair.treated, j)] - x[(pair.control, j)];
        }
    }
    gap.iter_mut().for_each(|g| *g /= m.n_pairs() as f64);
    Ok(libm::sqrt(chol.inverse_quadratic_form(&gap)?))
}

/// Average within-pair Mahalanobis distance.
pub fn pairwise_imbalance(m: &MatchedSample<'_>, sigma: &SpdMatrix) -> Result<f64> {
    let chol = factor_for(m, sigma)?;
    if m.n_pairs() == 0 {
        return Err(Error::NoPairsFormed);
    }
    let x = m.source().x();
    let mut total = 0.0;
    for pair in m.pairs() {
        let diff: Vec<f64> = x
            .row(pair.treated)
            .iter()
            .zip(x.row(pair.control))
            .map(|(a, b)| a - b)
            .collect();
        total += libm::sqrt(chol.inverse_quadratic_form(&diff)?);
    }
    Ok(total / m.n_pairs() as f64)
}

/// Refits the logistic treatment model on the matched units, in the order
/// of [`MatchedSample::units`].
pub fn refit_on_matched(m: &MatchedSample<'_>) -> Result<PropensityFit> {
    let x = m.source().x().select_rows(&m.units());
    fit_logistic(&x, &m.unit_treatment())
}

/// Assembles every diagnostic. `refit` must come from [`refit_on_matched`]
/// on the same sample.
pub fn balance_report(
    m: &MatchedSample<'_>,
    original_sigma: &SpdMatrix,
    refit: Option<&PropensityFit>,
) -> Result<BalanceReport> {
    let smd = (0..m.source().p())
        .map(|j| match smd(m, j) {
            Ok(d) => Ok(d),
            Err(Error::ZeroVariance { covariate }) => {
                let (t, c) = group_columns(m, covariate);
                Ok(if t[0] > c[0] { f64::INFINITY } else { f64::NEG_INFINITY })
            }
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<f64>>>()?;
    let c_stat = match refit {
        Some(fit) => {
            if fit.ps.len() != 2 * m.n_pairs() {
                return Err(Error::DimensionMismatch {
                    expected: 2 * m.n_pairs(),
                    got: fit.ps.len(),
                });
            }
            Some(c_statistic(&fit.ps, &m.unit_treatment())?)
        }
        None => None,
    };
    Ok(BalanceReport {
        smd,
        mahalanobis_means: mahalanobis_means(m, original_sigma)?,
        pairwise_ix: pairwise_imbalance(m, original_sigma)?,
        c_stat,
        n_pairs: m.n_pairs(),
    })
}
