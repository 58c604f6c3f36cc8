//! Synthetic confounded observational data.
//!
//! Covariates are iid standard normal, treatment follows a logistic model in
//! the covariates, and the outcome is `β₀ + β₁·A + g(X) + ε` with a constant
//! treatment effect `β₁`. Under this design treatment assignment is
//! ignorable given `X` and every unit has positive probability of either
//! treatment, so the population average treatment effect equals `β₁`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{dot, expit, norm, Matrix, RandomStream};

/// Default cap on attempts in [`select_coefficient_pair`].
pub const DEFAULT_MAX_REJECTION_ATTEMPTS: usize = 100_000;

const ZERO_NORM: f64 = 1e-12;

/// Coefficient vector with a known Euclidean norm (`scale`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefVector {
    values: Vec<f64>,
    scale: f64,
}

impl CoefVector {
    /// Wraps explicit coefficients; `scale` becomes their norm. Zero vectors
    /// are allowed (a randomized design uses `α₁ = 0`).
    pub fn from_values(values: Vec<f64>) -> Self {
        let scale = norm(&values);
        CoefVector { values, scale }
    }

    pub fn zeros(dim: usize) -> Self {
        CoefVector {
            values: vec![0.0; dim],
            scale: 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

/// Builds a coefficient vector from raw magnitudes and sign flips: normalize
/// to unit length, negate the flagged entries, multiply by `scale`.
pub fn coef_vector_from_draws(raw: &[u32], negate: &[bool], scale: f64) -> Result<CoefVector> {
    if raw.len() != negate.len() {
        return Err(Error::DimensionMismatch {
            expected: raw.len(),
            got: negate.len(),
        });
    }
    let raw: Vec<f64> = raw.iter().map(|&v| v as f64).collect();
    let len = norm(&raw);
    if len < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    let values = raw
        .iter()
        .zip(negate)
        .map(|(v, &neg)| {
            let unit = v / len;
            scale * if neg { -unit } else { unit }
        })
        .collect();
    Ok(CoefVector { values, scale })
}

/// Draws `dim` integers uniformly from 1..=9, then one fair sign flip per
/// element, and returns the normalized vector times `scale`.
pub fn generate_coef_vector(rng: &mut RandomStream, dim: usize, scale: f64) -> Result<CoefVector> {
    if dim == 0 {
        return Err(Error::InvalidArgument(format!("coefficient dimension must be positive")));
    }
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
    }
    let raw: Vec<u32> = (0..dim).map(|_| rng.uniform_int(1, 9) as u32).collect();
    let negate: Vec<bool> = (0..dim).map(|_| rng.bernoulli(0.5)).collect();
    coef_vector_from_draws(&raw, &negate, scale)
}

/// Sine of the angle between `u` and `v`, `√(1 − cos²θ)`.
///
/// Ranges over `[0, 1]`: 0 for parallel or anti-parallel vectors, 1 for
/// orthogonal ones.
pub fn sine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu < ZERO_NORM || nv < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    let cos = dot(u, v) / (nu * nv);
    Ok(libm::sqrt((1.0 - cos * cos).max(0.0)))
}

/// Acceptance region for sine distances: `(lo, hi]`, or `[lo, hi]` when
/// `lo_inclusive`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineInterval {
    pub lo: f64,
    pub hi: f64,
    pub lo_inclusive: bool,
}

impl SineInterval {
    pub fn new(lo: f64, hi: f64, lo_inclusive: bool) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "sine interval needs 0 <= lo < hi <= 1, got ({lo}, {hi}]"
            )));
        }
        Ok(SineInterval { lo, hi, lo_inclusive })
    }

    /// `[0, 0.2]`: treatment and outcome coefficients nearly collinear.
    pub fn aligned() -> Self {
        SineInterval {
            lo: 0.0,
            hi: 0.2,
            lo_inclusive: true,
        }
    }

    /// `(0.8, 1]`: treatment and outcome coefficients nearly orthogonal.
    pub fn orthogonal() -> Self {
        SineInterval {
            lo: 0.8,
            hi: 1.0,
            lo_inclusive: false,
        }
    }

    pub fn contains(&self, s: f64) -> bool {
        let above = if self.lo_inclusive { s >= self.lo } else { s > self.lo };
        above && s <= self.hi
    }
}

/// Rejection-samples `(β₂, α₁)` pairs, `β₂` first, until their sine
/// distance falls in `interval`.
pub fn select_coefficient_pair(
    rng: &mut RandomStream,
    dim: usize,
    k_beta: f64,
    k_alpha: f64,
    interval: SineInterval,
    max_attempts: usize,
) -> Result<(CoefVector, CoefVector)> {
    for _ in 0..max_attempts {
        let beta2 = generate_coef_vector(rng, dim, k_beta)?;
        let alpha1 = generate_coef_vector(rng, dim, k_alpha)?;
        if interval.contains(sine_distance(beta2.values(), alpha1.values())?) {
            return Ok((beta2, alpha1));
        }
    }
    Err(Error::RejectionLimitExceeded {
        attempts: max_attempts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeKind {
    Linear,
    Complex,
}

/// `coef · X[covariate]²` (0-based covariate index).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticTerm {
    pub covariate: usize,
    pub coef: f64,
}

/// `coef · X[first] · X[second]` (0-based covariate indices).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionTerm {
    pub first: usize,
    pub second: usize,
    pub coef: f64,
}

/// Default nonlinear part of the complex outcome model:
/// `0.5·X₁² + 0.5·X₂² + 0.7·X₁X₂ + 0.7·X₃X₄`.
pub fn default_complex_terms() -> (Vec<QuadraticTerm>, Vec<InteractionTerm>) {
    (
        vec![
            QuadraticTerm { covariate: 0, coef: 0.5 },
            QuadraticTerm { covariate: 1, coef: 0.5 },
        ],
        vec![
            InteractionTerm { first: 0, second: 1, coef: 0.7 },
            InteractionTerm { first: 2, second: 3, coef: 0.7 },
        ],
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModelSpec {
    kind: OutcomeKind,
    beta0: f64,
    beta1: f64,
    beta2: CoefVector,
    quadratic: Vec<QuadraticTerm>,
    interactions: Vec<InteractionTerm>,
    noise_sd: f64,
}

impl OutcomeModelSpec {
    pub fn linear(beta0: f64, beta1: f64, beta2: CoefVector, noise_sd: f64) -> Result<Self> {
        Self::build(OutcomeKind::Linear, beta0, beta1, beta2, Vec::new(), Vec::new(), noise_sd)
    }

    pub fn complex(
        beta0: f64,
        beta1: f64,
        beta2: CoefVector,
        quadratic: Vec<QuadraticTerm>,
        interactions: Vec<InteractionTerm>,
        noise_sd: f64,
    ) -> Result<Self> {
        Self::build(OutcomeKind::Complex, beta0, beta1, beta2, quadratic, interactions, noise_sd)
    }

    fn build(
        kind: OutcomeKind,
        beta0: f64,
        beta1: f64,
        beta2: CoefVector,
        quadratic: Vec<QuadraticTerm>,
        interactions: Vec<InteractionTerm>,
        noise_sd: f64,
    ) -> Result<Self> {
        if !(noise_sd > 0.0 && noise_sd.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise_sd must be positive, got {noise_sd}")));
        }
        let p = beta2.dim();
        let out_of_range = quadratic.iter().any(|t| t.covariate >= p)
            || interactions.iter().any(|t| t.first >= p || t.second >= p);
        if out_of_range {
            return Err(Error::InvalidArgument(format!(
                "outcome term refers to a covariate outside 0..{p}"
            )));
        }
        Ok(OutcomeModelSpec {
            kind,
            beta0,
            beta1,
            beta2,
            quadratic,
            interactions,
            noise_sd,
        })
    }

    pub fn kind(&self) -> OutcomeKind {
        self.kind
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    /// True treatment effect.
    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn beta2(&self) -> &CoefVector {
        &self.beta2
    }

    pub fn quadratic(&self) -> &[QuadraticTerm] {
        &self.quadratic
    }

    pub fn interactions(&self) -> &[InteractionTerm] {
        &self.interactions
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    /// Covariate part `g(x)` of the conditional mean.
    pub fn covariate_effect(&self, x: &[f64]) -> f64 {
        let mut g = dot(self.beta2.values(), x);
        for t in &self.quadratic {
            g += t.coef * x[t.covariate] * x[t.covariate];
        }
        for t in &self.interactions {
            g += t.coef * x[t.first] * x[t.second];
        }
        g
    }

    /// `E[Y | A = a, X = x]`.
    pub fn conditional_mean(&self, treated: bool, x: &[f64]) -> f64 {
        self.beta0 + if treated { self.beta1 } else { 0.0 } + self.covariate_effect(x)
    }
}

/// Generating parameters attached to a simulated [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub outcome: OutcomeModelSpec,
    pub alpha0: f64,
    pub alpha1: CoefVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    treatment: Vec<bool>,
    y: Vec<f64>,
    truth: Option<Truth>,
}

impl Dataset {
    /// Wraps observed data. Lengths must agree; both treatment classes are
    /// checked by the stages that need them.
    pub fn new(x: Matrix, treatment: Vec<bool>, y: Vec<f64>) -> Result<Self> {
        let n = x.rows();
        for len in [treatment.len(), y.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        Ok(Dataset {
            x,
            treatment,
            y,
            truth: None,
        })
    }

    pub fn with_truth(mut self, truth: Truth) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn treatment(&self) -> &[bool] {
        &self.treatment
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn truth(&self) -> Option<&Truth> {
        self.truth.as_ref()
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&a| a).count()
    }

    pub fn treated_fraction(&self) -> f64 {
        self.n_treated() as f64 / self.n() as f64
    }

    pub fn has_both_classes(&self) -> bool {
        let t = self.n_treated();
        t > 0 && t < self.n()
    }
}

fn draw_outcomes(
    rng: &mut RandomStream,
    x: &Matrix,
    treatment: &[bool],
    outcome: &OutcomeModelSpec,
) -> Vec<f64> {
    (0..x.rows())
        .map(|i| outcome.conditional_mean(treatment[i], x.row(i)) + outcome.noise_sd * rng.standard_normal())
        .collect()
}

fn draw_covariates(rng: &mut RandomStream, n: usize, p: usize) -> Matrix {
    let data = (0..n * p).map(|_| rng.standard_normal()).collect();
    Matrix::from_row_major(n, p, data).expect("n * p entries")
}

/// Simulates one observational sample.
///
/// Draw order: covariates (row-major), then treatment indicators
/// `Aᵢ ~ Bernoulli(expit(α₀ + α₁ᵀXᵢ))`, then outcome noise.
pub fn generate_dataset(
    rng: &mut RandomStream,
    n: usize,
    alpha0: f64,
    alpha1: &CoefVector,
    outcome: &OutcomeModelSpec,
) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InsufficientRows { needed: 2, got: n });
    }
    let p = alpha1.dim();
    if outcome.beta2().dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: outcome.beta2().dim(),
        });
    }
    let x = draw_covariates(rng, n, p);
    let treatment: Vec<bool> = (0..n)
        .map(|i| rng.bernoulli(expit(alpha0 + dot(alpha1.values(), x.row(i)))))
        .collect();
    let y = draw_outcomes(rng, &x, &treatment, outcome);
    let ds = Dataset {
        x,
        treatment,
        y,
        truth: Some(Truth {
            outcome: outcome.clone(),
            alpha0,
            alpha1: alpha1.clone(),
        }),
    };
    if !ds.has_both_classes() {
        return Err(Error::DegenerateTreatment);
    }
    Ok(ds)
}

/// Completely randomized design with exactly `n_per_arm` treated and
/// `n_per_arm` control units (treated units are a uniform random subset).
pub fn generate_randomized_dataset(
    rng: &mut RandomStream,
    n_per_arm: usize,
    outcome: &OutcomeModelSpec,
) -> Result<Dataset> {
    if n_per_arm == 0 {
        return Err(Error::InsufficientRows { needed: 1, got: 0 });
    }
    let n = 2 * n_per_arm;
    let p = outcome.beta2().dim();
    let x = draw_covariates(rng, n, p);
    let mut treatment: Vec<bool> = (0..n).map(|i| i < n_per_arm).collect();
    rng.shuffle(&mut treatment);
    let y = draw_outcomes(rng, &x, &treatment, outcome);
    Ok(Dataset {
        x,
        treatment,
        y,
        truth: Some(Truth {
            outcome: outcome.clone(),
            alpha0: 0.0,
            alpha1: CoefVector::zeros(p),
        }),
    })
}
