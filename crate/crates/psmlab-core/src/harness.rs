//! Monte Carlo caliper sweep.
//!
//! A scenario fixes one coefficient pair `(β₂, α₁)` and then simulates
//! `replicates` independent datasets. Replicate `i` draws from substream `i`
//! of the scenario seed (redraws after a one-class treatment vector use
//! `i + (attempt << 32)`), and the coefficient pair comes from substream
//! `u64::MAX`. Records are aggregated in replicate order, so a summary does
//! not depend on how replicates were scheduled.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::balance::{balance_report, refit_on_matched, SMD_IMBALANCE_THRESHOLD};
use crate::datagen::{
    default_complex_terms, generate_dataset, select_coefficient_pair, CoefVector, Dataset, InteractionTerm,
    OutcomeKind, OutcomeModelSpec, QuadraticTerm, SineInterval, DEFAULT_MAX_REJECTION_ATTEMPTS,
};
use crate::error::{Error, Result};
use crate::estimation::{cherry_pick_max, estimate_effect, estimate_effect_unmatched, ModelSpec, SandwichKind};
use crate::matching::{nearest_neighbor_match, Caliper};
use crate::numerics::{covariance_matrix, RandomStream};
use crate::propensity::fit_logistic;

/// Caliper schedule of the published sweep.
pub const DEFAULT_CALIPER_MULTIPLIERS: [f64; 6] = [20.0, 1.0, 0.2, 0.02, 0.002, 0.0002];

/// Covariate whose SMD is tracked across the sweep (X₃, 0-based).
pub const MONITORED_COVARIATE: usize = 2;

/// Stream index reserved for drawing the scenario's coefficient pair.
pub const COEFFICIENT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedCoefs {
    pub alpha1: Vec<f64>,
    pub beta2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTerms {
    pub quadratic: Vec<QuadraticTerm>,
    pub interactions: Vec<InteractionTerm>,
}

impl Default for ComplexTerms {
    fn default() -> Self {
        let (quadratic, interactions) = default_complex_terms();
        ComplexTerms {
            quadratic,
            interactions,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub seed: u64,
    pub replicates: usize,
    pub n: usize,
    pub p: usize,
    pub alpha0: f64,
    pub k_alpha: f64,
    pub k_beta: f64,
    pub sine_interval: SineInterval,
    /// Explicit coefficients; when set, `k_*` and `sine_interval` are unused.
    pub fixed_coefs: Option<FixedCoefs>,
    pub beta0: f64,
    pub beta1: f64,
    pub noise_sd: f64,
    pub outcome_kind: OutcomeKind,
    pub complex_terms: ComplexTerms,
    pub caliper_multipliers: Vec<f64>,
    pub model_specs: Vec<ModelSpec>,
    pub include_unmatched_arm: bool,
    pub sandwich: SandwichKind,
    /// Refit the treatment model on each matched sample for the C-statistic.
    pub compute_c_stat: bool,
    pub max_rejection_attempts: usize,
    pub max_treatment_retries: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario_id: "scenario".into(),
            seed: 1,
            replicates: 1000,
            n: 1500,
            p: 5,
            alpha0: -0.9,
            k_alpha: 1.0,
            k_beta: 1.2,
            sine_interval: SineInterval::orthogonal(),
            fixed_coefs: None,
            beta0: 0.0,
            beta1: 0.5,
            noise_sd: 1.0,
            outcome_kind: OutcomeKind::Linear,
            complex_terms: ComplexTerms::default(),
            caliper_multipliers: DEFAULT_CALIPER_MULTIPLIERS.to_vec(),
            model_specs: vec![ModelSpec::ma(), ModelSpec::max45(), ModelSpec::mfull(5)],
            include_unmatched_arm: false,
            sandwich: SandwichKind::HC1,
            compute_c_stat: true,
            max_rejection_attempts: DEFAULT_MAX_REJECTION_ATTEMPTS,
            max_treatment_retries: 100,
        }
    }
}

fn invalid(msg: String) -> Error {
    Error::ConfigInvalid(msg)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.replicates as u64 >= 1 << 32 {
            return Err(invalid(format!("replicates must be in 1..2^32, got {}", self.replicates)));
        }
        if self.p <= MONITORED_COVARIATE {
            return Err(invalid(format!("p must be at least 3, got {}", self.p)));
        }
        if self.n < self.p + 2 {
            return Err(invalid(format!("n = {} is too small for p = {}", self.n, self.p)));
        }
        for (name, v) in [("alpha0", self.alpha0), ("beta0", self.beta0), ("beta1", self.beta1)] {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite")));
            }
        }
        for (name, v) in [("k_alpha", self.k_alpha), ("k_beta", self.k_beta), ("noise_sd", self.noise_sd)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let cm = &self.caliper_multipliers;
        if cm.is_empty() {
            return Err(invalid("caliper_multipliers is empty".into()));
        }
        if cm.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(invalid(format!("caliper_multipliers must be positive: {cm:?}")));
        }
        if cm.windows(2).any(|w| w[0] <= w[1]) {
            return Err(invalid(format!("caliper_multipliers must be strictly descending: {cm:?}")));
        }
        if self.model_specs.is_empty() {
            return Err(invalid("model_specs is empty".into()));
        }
        for spec in &self.model_specs {
            if let Some(&c) = spec.covariates().iter().find(|&&c| c > self.p) {
                return Err(invalid(format!("model {} uses X{c} but p = {}", spec.name(), self.p)));
            }
        }
        if let Some(fixed) = &self.fixed_coefs {
            for (name, v) in [("alpha1", &fixed.alpha1), ("beta2", &fixed.beta2)] {
                if v.len() != self.p {
                    return Err(invalid(format!("fixed {name} has {} entries, p = {}", v.len(), self.p)));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(invalid(format!("fixed {name} must be finite")));
                }
            }
        }
        let terms = &self.complex_terms;
        let out_of_range = terms.quadratic.iter().any(|t| t.covariate >= self.p)
            || terms.interactions.iter().any(|t| t.first >= self.p || t.second >= self.p);
        if out_of_range {
            return Err(invalid(format!("complex term refers to a covariate beyond p = {}", self.p)));
        }
        if self.max_rejection_attempts == 0 {
            return Err(invalid("max_rejection_attempts must be positive".into()));
        }
        Ok(())
    }
}

/// Coefficients shared by every replicate of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTruth {
    pub alpha1: CoefVector,
    pub outcome: OutcomeModelSpec,
}

pub fn resolve_truth(config: &ScenarioConfig) -> Result<ScenarioTruth> {
    config.validate()?;
    let (beta2, alpha1) = match &config.fixed_coefs {
        Some(fixed) => (
            CoefVector::from_values(fixed.beta2.clone()),
            CoefVector::from_values(fixed.alpha1.clone()),
        ),
        None => {
            let mut rng = RandomStream::substream(config.seed, COEFFICIENT_STREAM);
            select_coefficient_pair(
                &mut rng,
                config.p,
                config.k_beta,
                config.k_alpha,
                config.sine_interval,
                config.max_rejection_attempts,
            )?
        }
    };
    let outcome = match config.outcome_kind {
        OutcomeKind::Linear => OutcomeModelSpec::linear(config.beta0, config.beta1, beta2, config.noise_sd)?,
        OutcomeKind::Complex => OutcomeModelSpec::complex(
            config.beta0,
            config.beta1,
            beta2,
            config.complex_terms.quadratic.clone(),
            config.complex_terms.interactions.clone(),
            config.noise_sd,
        )?,
    };
    Ok(ScenarioTruth { alpha1, outcome })
}

/// Pipeline stage at which a replicate-level failure happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Data,
    Propensity,
    Matching,
    Balance,
    CStat,
    Estimate,
    Unmatched,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Data => "data",
            Stage::Propensity => "propensity",
            Stage::Matching => "matching",
            Stage::Balance => "balance",
            Stage::CStat => "c_stat",
            Stage::Estimate => "estimate",
            Stage::Unmatched => "unmatched",
        }
    }
}

/// Short name of an error variant, used to tally failures.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::SingularMatrix { .. } => "SingularMatrix",
        Error::NotSymmetric { .. } => "NotSymmetric",
        Error::DimensionMismatch { .. } => "DimensionMismatch",
        Error::InsufficientRows { .. } => "InsufficientRows",
        Error::ZeroVector => "ZeroVector",
        Error::RejectionLimitExceeded { .. } => "RejectionLimitExceeded",
        Error::DegenerateTreatment => "DegenerateTreatment",
        Error::SeparationDetected { .. } => "SeparationDetected",
        Error::OneClassOnly => "OneClassOnly",
        Error::NoPairsFormed => "NoPairsFormed",
        Error::ZeroVariance { .. } => "ZeroVariance",
        Error::RankDeficient => "RankDeficient",
        Error::TooFewPairs { .. } => "TooFewPairs",
        Error::InvalidArgument(_) => "InvalidArgument",
        Error::ConfigInvalid(_) => "ConfigInvalid",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub stage: Stage,
    /// Caliper multiplier, for failures inside the sweep.
    pub caliper: Option<f64>,
    pub kind: String,
}

impl Failure {
    fn new(stage: Stage, caliper: Option<f64>, kind: &str) -> Self {
        Failure {
            stage,
            caliper,
            kind: kind.to_string(),
        }
    }
}

/// The parts of an [`crate::estimation::EffectEstimate`] kept per replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRecord {
    pub beta1_hat: f64,
    pub se_model: f64,
    pub se_sandwich: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceRecord {
    pub smd: Vec<f64>,
    pub mahalanobis_means: f64,
    pub pairwise_ix: f64,
    pub c_stat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaliperRecord {
    pub multiplier: f64,
    pub width: f64,
    pub n_pairs: usize,
    pub balance: Option<BalanceRecord>,
    /// One entry per configured model spec, `None` where the fit failed.
    pub estimates: Vec<Option<EstimateRecord>>,
    /// Max and spread across specs; present only when every spec was fitted.
    pub cherry_pick: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub index: u64,
    /// Redraws needed because a dataset had only one treatment class.
    pub retries: usize,
    pub treated_fraction: Option<f64>,
    /// Empty when the replicate failed before matching.
    pub calipers: Vec<CaliperRecord>,
    pub unmatched: Option<Vec<Option<EstimateRecord>>>,
    pub failures: Vec<Failure>,
}

impl ReplicateRecord {
    /// True when the pipeline reached the caliper sweep.
    pub fn completed(&self) -> bool {
        !self.calipers.is_empty()
    }
}

fn draw_dataset(config: &ScenarioConfig, truth: &ScenarioTruth, index: u64) -> (Result<Dataset>, usize) {
    let mut attempt: u64 = 0;
    loop {
        let mut rng = RandomStream::substream(config.seed, index + (attempt << 32));
        match generate_dataset(&mut rng, config.n, config.alpha0, &truth.alpha1, &truth.outcome) {
            Err(Error::DegenerateTreatment) if (attempt as usize) < config.max_treatment_retries => attempt += 1,
            other => return (other, attempt as usize),
        }
    }
}

fn to_record(e: &crate::estimation::EffectEstimate) -> EstimateRecord {
    EstimateRecord {
        beta1_hat: e.beta1_hat,
        se_model: e.se_model,
        se_sandwich: e.se_sandwich,
    }
}

/// Runs the full pipeline on replicate `index`. Failures are recorded in the
/// returned record; the function itself does not fail.
pub fn run_replicate(config: &ScenarioConfig, truth: &ScenarioTruth, index: u64) -> ReplicateRecord {
    let mut record = ReplicateRecord {
        index,
        retries: 0,
        treated_fraction: None,
        calipers: Vec::new(),
        unmatched: None,
        failures: Vec::new(),
    };
    let (ds, retries) = draw_dataset(config, truth, index);
    record.retries = retries;
    let ds = match ds {
        Ok(ds) => ds,
        Err(e) => {
            record.failures.push(Failure::new(Stage::Data, None, error_kind(&e)));
            return record;
        }
    };
    record.treated_fraction = Some(ds.treated_fraction());

    let fit = match fit_logistic(ds.x(), ds.treatment()) {
        Ok(fit) if fit.converged => fit,
        Ok(_) => {
            record.failures.push(Failure::new(Stage::Propensity, None, "NotConverged"));
            return record;
        }
        Err(e) => {
            record.failures.push(Failure::new(Stage::Propensity, None, error_kind(&e)));
            return record;
        }
    };
    let sigma = match covariance_matrix(ds.x()) {
        Ok(s) => s,
        Err(e) => {
            record.failures.push(Failure::new(Stage::Data, None, error_kind(&e)));
            return record;
        }
    };

    for &multiplier in &config.caliper_multipliers {
        let caliper = match Caliper::from_logit_ps(multiplier, &fit.logit_ps) {
            Ok(c) => c,
            Err(e) => {
                record.failures.push(Failure::new(Stage::Matching, Some(multiplier), error_kind(&e)));
                continue;
            }
        };
        let mut rec = CaliperRecord {
            multiplier,
            width: caliper.width(),
            n_pairs: 0,
            balance: None,
            estimates: vec![None; config.model_specs.len()],
            cherry_pick: None,
        };
        let matched = match nearest_neighbor_match(&ds, &fit, caliper) {
            Ok(m) => m,
            Err(e) => {
                record.failures.push(Failure::new(Stage::Matching, Some(multiplier), error_kind(&e)));
                record.calipers.push(rec);
                continue;
            }
        };
        rec.n_pairs = matched.n_pairs();

        let refit = if config.compute_c_stat {
            match refit_on_matched(&matched) {
                Ok(f) if f.converged => Some(f),
                Ok(_) => {
                    record.failures.push(Failure::new(Stage::CStat, Some(multiplier), "NotConverged"));
                    None
                }
                Err(e) => {
                    record.failures.push(Failure::new(Stage::CStat, Some(multiplier), error_kind(&e)));
                    None
                }
            }
        } else {
            None
        };
        match balance_report(&matched, &sigma, refit.as_ref()) {
            Ok(b) => {
                rec.balance = Some(BalanceRecord {
                    smd: b.smd,
                    mahalanobis_means: b.mahalanobis_means,
                    pairwise_ix: b.pairwise_ix,
                    c_stat: b.c_stat,
                })
            }
            Err(e) => record.failures.push(Failure::new(Stage::Balance, Some(multiplier), error_kind(&e))),
        }

        let mut fitted = Vec::with_capacity(config.model_specs.len());
        for (slot, spec) in rec.estimates.iter_mut().zip(&config.model_specs) {
            match estimate_effect(&matched, spec, config.sandwich) {
                Ok(est) => {
                    *slot = Some(to_record(&est));
                    fitted.push(est);
                }
                Err(e) => record.failures.push(Failure::new(Stage::Estimate, Some(multiplier), error_kind(&e))),
            }
        }
        if fitted.len() == config.model_specs.len() {
            rec.cherry_pick = cherry_pick_max(&fitted).map(|c| (c.max_estimate, c.variance));
        }
        record.calipers.push(rec);
    }

    if config.include_unmatched_arm {
        let mut arm = Vec::with_capacity(config.model_specs.len());
        for spec in &config.model_specs {
            match estimate_effect_unmatched(&ds, spec, config.sandwich) {
                Ok(est) => arm.push(Some(to_record(&est))),
                Err(e) => {
                    record.failures.push(Failure::new(Stage::Unmatched, None, error_kind(&e)));
                    arm.push(None);
                }
            }
        }
        record.unmatched = Some(arm);
    }
    record
}

/// Mean, standard deviation, and Monte Carlo standard error of a set of
/// replicate values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    /// NaN when `n == 0`.
    pub mean: f64,
    /// Sample SD; 0 when `n == 1`, NaN when `n == 0`.
    pub sd: f64,
    pub n: usize,
}

impl Aggregate {
    /// Sums in the given order.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Aggregate {
                mean: f64::NAN,
                sd: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n == 1 {
            0.0
        } else {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            libm::sqrt(ss / (n - 1) as f64)
        };
        Aggregate { mean, sd, n }
    }

    /// `sd / √n`.
    pub fn mc_se(&self) -> f64 {
        self.sd / libm::sqrt(self.n as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSummary {
    pub spec: ModelSpec,
    /// Across-replicate distribution of β̂₁; `estimate.sd` is the empirical SE.
    pub estimate: Aggregate,
    pub bias: f64,
    pub se_model: Aggregate,
    pub se_sandwich: Aggregate,
}

impl EstimateSummary {
    pub fn empirical_se(&self) -> f64 {
        self.estimate.sd
    }

    pub fn n_replicates_used(&self) -> usize {
        self.estimate.n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaliperSummary {
    pub multiplier: f64,
    /// Over every replicate that reached matching, zero-pair ones included.
    pub pairs: Aggregate,
    pub zero_pair_replicates: usize,
    pub smd_x3: Aggregate,
    /// Indicator of `|SMD(X₃)| > 0.1`; its mean is the proportion.
    pub smd_x3_imbalanced: Aggregate,
    pub mahalanobis_means: Aggregate,
    pub pairwise_ix: Aggregate,
    pub c_stat: Aggregate,
    pub estimates: Vec<EstimateSummary>,
    pub cherry_pick_max: Aggregate,
    pub cherry_pick_variance: Aggregate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummary {
    pub scenario_id: String,
    pub beta1: f64,
    pub replicates: usize,
    pub completed_replicates: usize,
    pub treatment_retries: usize,
    pub treated_fraction: Aggregate,
    pub calipers: Vec<CaliperSummary>,
    pub unmatched: Option<Vec<EstimateSummary>>,
    /// Failure counts keyed by (stage, error kind).
    pub failures: BTreeMap<(Stage, String), usize>,
}

fn summarize_estimates(specs: &[ModelSpec], beta1: f64, rows: &[&Vec<Option<EstimateRecord>>]) -> Vec<EstimateSummary> {
    specs
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let fitted: Vec<EstimateRecord> = rows.iter().filter_map(|r| r[k]).collect();
            let pick = |f: fn(&EstimateRecord) -> f64| Aggregate::from_values(&fitted.iter().map(f).collect::<Vec<_>>());
            let estimate = pick(|e| e.beta1_hat);
            EstimateSummary {
                spec: spec.clone(),
                bias: estimate.mean - beta1,
                estimate,
                se_model: pick(|e| e.se_model),
                se_sandwich: pick(|e| e.se_sandwich),
            }
        })
        .collect()
}

/// Aggregates replicate records (in any order) into a scenario summary.
pub fn summarize(config: &ScenarioConfig, records: &[ReplicateRecord]) -> ScenarioSummary {
    let mut sorted: Vec<&ReplicateRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.index);

    let mut failures = BTreeMap::new();
    for f in sorted.iter().flat_map(|r| &r.failures) {
        *failures.entry((f.stage, f.kind.clone())).or_insert(0) += 1;
    }
    let completed: Vec<&ReplicateRecord> = sorted.iter().copied().filter(|r| r.completed()).collect();
    let fractions: Vec<f64> = sorted.iter().filter_map(|r| r.treated_fraction).collect();

    let calipers = config
        .caliper_multipliers
        .iter()
        .enumerate()
        .map(|(c, &multiplier)| {
            let recs: Vec<&CaliperRecord> = completed.iter().map(|r| &r.calipers[c]).collect();
            let pairs: Vec<f64> = recs.iter().map(|r| r.n_pairs as f64).collect();
            let balance: Vec<&BalanceRecord> = recs.iter().filter_map(|r| r.balance.as_ref()).collect();
            let over = |f: &dyn Fn(&BalanceRecord) -> Option<f64>| {
                Aggregate::from_values(&balance.iter().filter_map(|b| f(b)).collect::<Vec<_>>())
            };
            let rows: Vec<&Vec<Option<EstimateRecord>>> = recs.iter().map(|r| &r.estimates).collect();
            let picks: Vec<(f64, f64)> = recs.iter().filter_map(|r| r.cherry_pick).collect();
            CaliperSummary {
                multiplier,
                pairs: Aggregate::from_values(&pairs),
                zero_pair_replicates: recs.iter().filter(|r| r.n_pairs == 0).count(),
                smd_x3: over(&|b| Some(b.smd[MONITORED_COVARIATE])),
                smd_x3_imbalanced: over(&|b| {
                    Some(if b.smd[MONITORED_COVARIATE].abs() > SMD_IMBALANCE_THRESHOLD { 1.0 } else { 0.0 })
                }),
                mahalanobis_means: over(&|b| Some(b.mahalanobis_means)),
                pairwise_ix: over(&|b| Some(b.pairwise_ix)),
                c_stat: over(&|b| b.c_stat),
                estimates: summarize_estimates(&config.model_specs, config.beta1, &rows),
                cherry_pick_max: Aggregate::from_values(&picks.iter().map(|p| p.0).collect::<Vec<_>>()),
                cherry_pick_variance: Aggregate::from_values(&picks.iter().map(|p| p.1).collect::<Vec<_>>()),
            }
        })
        .collect();

    let unmatched = config.include_unmatched_arm.then(|| {
        let rows: Vec<&Vec<Option<EstimateRecord>>> = completed.iter().filter_map(|r| r.unmatched.as_ref()).collect();
        summarize_estimates(&config.model_specs, config.beta1, &rows)
    });

    ScenarioSummary {
        scenario_id: config.scenario_id.clone(),
        beta1: config.beta1,
        replicates: sorted.len(),
        completed_replicates: completed.len(),
        treatment_retries: sorted.iter().map(|r| r.retries).sum(),
        treated_fraction: Aggregate::from_values(&fractions),
        calipers,
        unmatched,
        failures,
    }
}

/// Runs every replicate on the current thread.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioSummary> {
    let truth = resolve_truth(config)?;
    let records: Vec<ReplicateRecord> = (0..config.replicates as u64)
        .map(|i| run_replicate(config, &truth, i))
        .collect();
    Ok(summarize(config, &records))
}
