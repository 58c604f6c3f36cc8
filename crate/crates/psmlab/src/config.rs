//! Scenario files.
//!
//! A scenario is a TOML document whose keys are the [`ScenarioConfig`] field
//! names. Missing keys take the desk-scale defaults; unknown keys are
//! rejected. Covariate numbers in the file are 1-based (`X1` is `1`).
//!
//! ```toml
//! scenario_id = "orthogonal"
//! seed = 11
//! replicates = 1000
//! beta1 = 0.5
//! outcome_kind = "Linear"
//! caliper_multipliers = [20.0, 1.0, 0.2, 0.02, 0.002, 0.0002]
//! model_specs = ["MA", "MAX45", "MFull", [1, 3]]
//!
//! [sine_interval]
//! lo = 0.8
//! hi = 1.0
//! lo_inclusive = false
//! ```

use std::fs;
use std::path::Path;

use psmlab_core::datagen::{InteractionTerm, OutcomeKind, QuadraticTerm, SineInterval};
use psmlab_core::estimation::{ModelSpec, SandwichKind};
use psmlab_core::harness::{ComplexTerms, FixedCoefs, ScenarioConfig};
use serde::Deserialize;

use crate::error::{Error, Result};

/// Environment variable that replaces the `seed` of any loaded scenario.
pub const SEED_ENV: &str = "PSMLAB_SEED";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalFile {
    lo: f64,
    hi: f64,
    #[serde(default)]
    lo_inclusive: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticFile {
    covariate: usize,
    coef: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InteractionFile {
    first: usize,
    second: usize,
    coef: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComplexTermsFile {
    #[serde(default)]
    quadratic: Vec<QuadraticFile>,
    #[serde(default)]
    interactions: Vec<InteractionFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixedCoefsFile {
    alpha1: Vec<f64>,
    beta2: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SpecFile {
    Named(String),
    Covariates(Vec<usize>),
}

#[derive(Debug, Deserialize)]
enum KindFile {
    #[serde(alias = "linear")]
    Linear,
    #[serde(alias = "complex")]
    Complex,
}

#[derive(Debug, Deserialize)]
enum SandwichFile {
    HC0,
    HC1,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario_id: Option<String>,
    seed: Option<u64>,
    replicates: Option<usize>,
    n: Option<usize>,
    p: Option<usize>,
    alpha0: Option<f64>,
    k_alpha: Option<f64>,
    k_beta: Option<f64>,
    sine_interval: Option<IntervalFile>,
    fixed_coefs: Option<FixedCoefsFile>,
    beta0: Option<f64>,
    beta1: Option<f64>,
    noise_sd: Option<f64>,
    outcome_kind: Option<KindFile>,
    complex_terms: Option<ComplexTermsFile>,
    caliper_multipliers: Option<Vec<f64>>,
    model_specs: Option<Vec<SpecFile>>,
    include_unmatched_arm: Option<bool>,
    sandwich: Option<SandwichFile>,
    compute_c_stat: Option<bool>,
    max_rejection_attempts: Option<usize>,
    max_treatment_retries: Option<usize>,
}

fn zero_based(c: usize, what: &str) -> Result<usize> {
    c.checked_sub(1)
        .ok_or_else(|| Error::Config(format!("{what}: covariates are numbered from 1")))
}

fn model_spec(spec: SpecFile, p: usize) -> Result<ModelSpec> {
    match spec {
        SpecFile::Named(name) => match name.as_str() {
            "MA" => Ok(ModelSpec::ma()),
            "MAX45" => Ok(ModelSpec::max45()),
            "MFull" => Ok(ModelSpec::mfull(p)),
            other => Err(Error::Config(format!(
                "unknown model spec {other:?} (expected MA, MAX45, MFull or a covariate list)"
            ))),
        },
        SpecFile::Covariates(cov) => ModelSpec::custom(cov).map_err(|e| Error::Config(e.to_string())),
    }
}

impl ScenarioFile {
    fn into_config(self) -> Result<ScenarioConfig> {
        let d = ScenarioConfig::default();
        let p = self.p.unwrap_or(d.p);
        let sine_interval = match self.sine_interval {
            Some(i) => SineInterval::new(i.lo, i.hi, i.lo_inclusive)
                .map_err(|e| Error::Config(format!("sine_interval: {e}")))?,
            None => d.sine_interval,
        };
        let complex_terms = match self.complex_terms {
            Some(t) => ComplexTerms {
                quadratic: t
                    .quadratic
                    .into_iter()
                    .map(|q| {
                        Ok(QuadraticTerm {
                            covariate: zero_based(q.covariate, "complex_terms.quadratic")?,
                            coef: q.coef,
                        })
                    })
                    .collect::<Result<_>>()?,
                interactions: t
                    .interactions
                    .into_iter()
                    .map(|i| {
                        Ok(InteractionTerm {
                            first: zero_based(i.first, "complex_terms.interactions")?,
                            second: zero_based(i.second, "complex_terms.interactions")?,
                            coef: i.coef,
                        })
                    })
                    .collect::<Result<_>>()?,
            },
            None => d.complex_terms,
        };
        let model_specs = match self.model_specs {
            Some(specs) => specs.into_iter().map(|s| model_spec(s, p)).collect::<Result<_>>()?,
            None if p == d.p => d.model_specs,
            None => vec![ModelSpec::ma(), ModelSpec::mfull(p)],
        };
        let config = ScenarioConfig {
            scenario_id: self.scenario_id.unwrap_or(d.scenario_id),
            seed: self.seed.unwrap_or(d.seed),
            replicates: self.replicates.unwrap_or(d.replicates),
            n: self.n.unwrap_or(d.n),
            p,
            alpha0: self.alpha0.unwrap_or(d.alpha0),
            k_alpha: self.k_alpha.unwrap_or(d.k_alpha),
            k_beta: self.k_beta.unwrap_or(d.k_beta),
            sine_interval,
            fixed_coefs: self.fixed_coefs.map(|f| FixedCoefs {
                alpha1: f.alpha1,
                beta2: f.beta2,
            }),
            beta0: self.beta0.unwrap_or(d.beta0),
            beta1: self.beta1.unwrap_or(d.beta1),
            noise_sd: self.noise_sd.unwrap_or(d.noise_sd),
            outcome_kind: match self.outcome_kind {
                Some(KindFile::Linear) => OutcomeKind::Linear,
                Some(KindFile::Complex) => OutcomeKind::Complex,
                None => d.outcome_kind,
            },
            complex_terms,
            caliper_multipliers: self.caliper_multipliers.unwrap_or(d.caliper_multipliers),
            model_specs,
            include_unmatched_arm: self.include_unmatched_arm.unwrap_or(d.include_unmatched_arm),
            sandwich: match self.sandwich {
                Some(SandwichFile::HC0) => SandwichKind::HC0,
                Some(SandwichFile::HC1) => SandwichKind::HC1,
                None => d.sandwich,
            },
            compute_c_stat: self.compute_c_stat.unwrap_or(d.compute_c_stat),
            max_rejection_attempts: self.max_rejection_attempts.unwrap_or(d.max_rejection_attempts),
            max_treatment_retries: self.max_treatment_retries.unwrap_or(d.max_treatment_retries),
        };
        config.validate().map_err(|e| match e {
            psmlab_core::Error::ConfigInvalid(msg) => Error::Config(msg),
            other => Error::Config(other.to_string()),
        })?;
        Ok(config)
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    file.into_config()
}

/// Reads a scenario file. The seed is not yet overridden; see [`apply_overrides`].
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Command-line overrides, applied after the environment.
#[derive(Debug, Default, Clone, Copy)]
pub struct Overrides {
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
}

/// Applies `PSMLAB_SEED` (value of `env_seed`) and then explicit overrides.
pub fn apply_overrides(config: &mut ScenarioConfig, env_seed: Option<&str>, overrides: Overrides) -> Result<()> {
    if let Some(raw) = env_seed {
        config.seed = raw
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={raw:?} is not an unsigned 64-bit integer")))?;
    }
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(r) = overrides.replicates {
        config.replicates = r;
    }
    config.validate().map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(parse_scenario("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn full_document_round_trips_fields() {
        let text = r#"
            scenario_id = "complex"
            seed = 99
            replicates = 12
            n = 400
            p = 5
            alpha0 = -1.0
            k_alpha = 0.8
            k_beta = 1.5
            beta0 = 2.0
            beta1 = 1.0
            noise_sd = 0.5
            outcome_kind = "Complex"
            caliper_multipliers = [1.0, 0.1]
            model_specs = ["MA", "MFull", [1, 3]]
            include_unmatched_arm = true
            sandwich = "HC0"
            compute_c_stat = false
            max_rejection_attempts = 10
            max_treatment_retries = 3

            [sine_interval]
            lo = 0.0
            hi = 0.2
            lo_inclusive = true

            [complex_terms]
            quadratic = [{ covariate = 1, coef = 0.25 }]
            interactions = [{ first = 2, second = 5, coef = -0.4 }]
        "#;
        let cfg = parse_scenario(text).unwrap();
        assert_eq!(cfg.scenario_id, "complex");
        assert_eq!((cfg.seed, cfg.replicates, cfg.n), (99, 12, 400));
        assert_eq!(cfg.outcome_kind, OutcomeKind::Complex);
        assert_eq!(cfg.sandwich, SandwichKind::HC0);
        assert_eq!(cfg.sine_interval, SineInterval::aligned());
        assert_eq!(cfg.complex_terms.quadratic[0].covariate, 0);
        assert_eq!((cfg.complex_terms.interactions[0].first, cfg.complex_terms.interactions[0].second), (1, 4));
        let names: Vec<String> = cfg.model_specs.iter().map(|s| s.name()).collect();
        assert_eq!(names, ["MA", "MFull", "M(A,X1,X3)"]);
        assert!(cfg.include_unmatched_arm && !cfg.compute_c_stat);
    }

    #[test]
    fn unknown_keys_are_errors() {
        for text in ["replicate = 3", "[sine_interval]\nlo = 0.1\nhi = 0.2\nwidth = 1", "seed = -1"] {
            assert!(matches!(parse_scenario(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "caliper_multipliers = [0.2, 1.0]",
            "replicates = 0",
            "model_specs = [\"MB\"]",
            "model_specs = [[0, 1]]",
            "[sine_interval]\nlo = 0.5\nhi = 0.2",
            "[fixed_coefs]\nalpha1 = [1.0]\nbeta2 = [1.0]",
        ] {
            let err = parse_scenario(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn seed_precedence() {
        let mut cfg = ScenarioConfig::default();
        apply_overrides(&mut cfg, Some("42"), Overrides::default()).unwrap();
        assert_eq!(cfg.seed, 42);
        apply_overrides(&mut cfg, Some("42"), Overrides { seed: Some(7), replicates: Some(3) }).unwrap();
        assert_eq!((cfg.seed, cfg.replicates), (7, 3));
        assert!(apply_overrides(&mut cfg, Some("abc"), Overrides::default()).is_err());
    }
}
