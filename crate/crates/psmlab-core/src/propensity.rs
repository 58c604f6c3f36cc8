//! Logistic propensity model fitted by maximum likelihood, and the
//! C-statistic (ROC AUC) of a set of scores against treatment.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{expit, max_abs, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub max_iterations: usize,
    /// Convergence tolerance on the max-norm of the score vector.
    pub tolerance: f64,
    /// |linear predictor| above which the data are declared separated.
    pub separation_threshold: f64,
    pub max_step_halvings: usize,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            max_iterations: 100,
            tolerance: 1e-8,
            separation_threshold: 30.0,
            max_step_halvings: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityFit {
    pub intercept: f64,
    pub coefs: Vec<f64>,
    /// Fitted propensity score per unit.
    pub ps: Vec<f64>,
    /// Linear predictor per unit, `log(ps / (1 − ps))`.
    pub logit_ps: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the score `Dᵀ(a − ps)` at the returned estimate.
    pub gradient_norm: f64,
}

struct State {
    eta: Vec<f64>,
    mu: Vec<f64>,
    loglik: f64,
}

fn design_with_intercept(x: &Matrix) -> Matrix {
    let (n, p) = (x.rows(), x.cols());
    let mut data = Vec::with_capacity(n * (p + 1));
    for i in 0..n {
        data.push(1.0);
        data.extend_from_slice(x.row(i));
    }
    Matrix::from_row_major(n, p + 1, data).expect("n * (p + 1) entries")
}

fn select_columns(x: &Matrix, columns: &[usize]) -> Matrix {
    if columns.len() == x.cols() {
        return x.clone();
    }
    let mut data = Vec::with_capacity(x.rows() * columns.len());
    for i in 0..x.rows() {
        data.extend(columns.iter().map(|&j| x[(i, j)]));
    }
    Matrix::from_row_major(x.rows(), columns.len(), data).expect("rows * columns entries")
}

// log(1 + e^η) without overflow
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + libm::log1p(libm::exp(-eta.abs()))
}

fn evaluate(design: &Matrix, beta: &[f64], a: &[f64]) -> State {
    let eta = design.mul_vec(beta).expect("beta matches design");
    let mu: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
    let loglik = eta
        .iter()
        .zip(a)
        .map(|(&e, &ai)| ai * e - softplus(e))
        .sum();
    State { eta, mu, loglik }
}

fn score(design: &Matrix, a: &[f64], mu: &[f64]) -> Vec<f64> {
    let resid: Vec<f64> = a.iter().zip(mu).map(|(ai, mi)| ai - mi).collect();
    design.transpose_mul_vec(&resid).expect("lengths agree")
}

/// Fits `logit P(A = 1 | X) = α₀ + α₁ᵀX` with the default [`IrlsOptions`].
pub fn fit_logistic(x: &Matrix, treatment: &[bool]) -> Result<PropensityFit> {
    fit_logistic_with(x, treatment, &IrlsOptions::default())
}

/// Newton–Raphson / IRLS with step halving whenever the log-likelihood
/// would decrease.
///
/// A fit that exhausts `max_iterations` is returned with
/// `converged == false`. Separation is reported as an error rather than
/// regularized away.
pub fn fit_logistic_with(x: &Matrix, treatment: &[bool], opts: &IrlsOptions) -> Result<PropensityFit> {
    let (n, p) = (x.rows(), x.cols());
    if treatment.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: treatment.len(),
        });
    }
    if n <= p + 1 {
        return Err(Error::InsufficientRows { needed: p + 2, got: n });
    }
    let n_treated = treatment.iter().filter(|&&t| t).count();
    if n_treated == 0 || n_treated == n {
        return Err(Error::OneClassOnly);
    }

    // identically zero columns carry no information; their coefficients stay 0
    let active: Vec<usize> = (0..p)
        .filter(|&j| (0..n).any(|i| x[(i, j)] != 0.0))
        .collect();
    let design = design_with_intercept(&select_columns(x, &active));
    let a: Vec<f64> = treatment.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    let mut beta = vec![0.0; active.len() + 1];
    let mut state = evaluate(&design, &beta, &a);
    let mut iterations = 0;
    let mut converged = false;
    let mut grad = score(&design, &a, &state.mu);

    loop {
        if max_abs(&state.eta) > opts.separation_threshold {
            return Err(Error::SeparationDetected {
                threshold: opts.separation_threshold,
            });
        }
        if max_abs(&grad) <= opts.tolerance {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        let weights: Vec<f64> = state.mu.iter().map(|m| m * (1.0 - m)).collect();
        let info = design.weighted_gram(Some(&weights))?;
        let step = info.cholesky()?.solve(&grad)?;

        let mut t = 1.0;
        let mut candidate;
        let mut halvings = 0;
        loop {
            candidate = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect::<Vec<f64>>();
            let next = evaluate(&design, &candidate, &a);
            let slack = 1e-12 * state.loglik.abs().max(1.0);
            if next.loglik >= state.loglik - slack || halvings >= opts.max_step_halvings {
                state = next;
                break;
            }
            t *= 0.5;
            halvings += 1;
        }
        beta = candidate;
        grad = score(&design, &a, &state.mu);
    }

    let mut coefs = vec![0.0; p];
    for (k, &j) in active.iter().enumerate() {
        coefs[j] = beta[k + 1];
    }
    Ok(PropensityFit {
        intercept: beta[0],
        coefs,
        ps: state.mu,
        logit_ps: state.eta,
        converged,
        iterations,
        gradient_norm: max_abs(&grad),
    })
}

/// Mann–Whitney AUC: `P(s_treated > s_control) + ½·P(tie)` over all
/// treated × control pairs, computed from mid-ranks.
pub fn c_statistic(scores: &[f64], treatment: &[bool]) -> Result<f64> {
    if scores.len() != treatment.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: treatment.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    let n1 = treatment.iter().filter(|&&t| t).count();
    let n0 = scores.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::OneClassOnly);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    // sum of mid-ranks (1-based) of the treated units
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let treated_in_block = order[start..end].iter().filter(|&&i| treatment[i]).count();
        rank_sum += mid_rank * treated_in_block as f64;
        start = end;
    }
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(u / (n1 as f64 * n0 as f64))
}
