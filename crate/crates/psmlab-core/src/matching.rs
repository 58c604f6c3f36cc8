//! Greedy 1:1 nearest-neighbor matching without replacement on the logit
//! propensity score, restricted to a caliper.
//!
//! Treated units are visited in dataset order. Each takes the still-unmatched
//! control closest on the logit scale, ties going to the lower control index,
//! provided the distance does not exceed the caliper width.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::numerics::sample_sd;
use crate::propensity::PropensityFit;

/// Maximum admissible within-pair |logit-PS| gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Caliper {
    multiplier: f64,
    width: f64,
}

impl Caliper {
    /// `multiplier × SD(logit_ps)`, the SD taken over the full pre-match sample.
    pub fn from_logit_ps(multiplier: f64, logit_ps: &[f64]) -> Result<Self> {
        if !(multiplier >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "caliper multiplier must be nonnegative, got {multiplier}"
            )));
        }
        Ok(Caliper {
            multiplier,
            width: multiplier * sample_sd(logit_ps)?,
        })
    }

    /// Caliper with an explicit width on the logit scale.
    pub fn with_width(width: f64) -> Self {
        Caliper {
            multiplier: f64::NAN,
            width,
        }
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn width(&self) -> f64 {
        self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatchedPair {
    pub treated: usize,
    pub control: usize,
}

#[derive(Debug, Clone)]
pub struct MatchedSample<'a> {
    source: &'a Dataset,
    pairs: Vec<MatchedPair>,
    caliper: Caliper,
}

impl<'a> MatchedSample<'a> {
    /// Wraps externally constructed pairs, checking that every pair joins a
    /// treated and a control unit and that no unit is used twice.
    pub fn from_pairs(source: &'a Dataset, pairs: Vec<MatchedPair>, caliper: Caliper) -> Result<Self> {
        let mut used = BTreeSet::new();
        let n = source.n();
        for p in &pairs {
            if p.treated >= n || p.control >= n {
                return Err(Error::InvalidArgument(format!("pair {p:?} indexes past {n} units")));
            }
            if !source.treatment()[p.treated] || source.treatment()[p.control] {
                return Err(Error::InvalidArgument(format!("pair {p:?} is not treated/control")));
            }
            if !used.insert(p.treated) || !used.insert(p.control) {
                return Err(Error::InvalidArgument(format!("unit reused in pair {p:?}")));
            }
        }
        Ok(MatchedSample { source, pairs, caliper })
    }

    pub fn source(&self) -> &'a Dataset {
        self.source
    }

    pub fn pairs(&self) -> &[MatchedPair] {
        &self.pairs
    }

    pub fn caliper(&self) -> Caliper {
        self.caliper
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Matched unit indices, interleaved `[t₀, c₀, t₁, c₁, …]`.
    pub fn units(&self) -> Vec<usize> {
        self.pairs.iter().flat_map(|p| [p.treated, p.control]).collect()
    }

    /// Treatment indicators aligned with [`MatchedSample::units`].
    pub fn unit_treatment(&self) -> Vec<bool> {
        self.pairs.iter().flat_map(|_| [true, false]).collect()
    }
}

// Orders controls by (logit value, index); -0.0 is folded into 0.0 so equal
// values stay adjacent.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

fn normalized(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Greedy matching on raw scores. Returns pairs in treated visiting order.
pub fn greedy_match(logit_ps: &[f64], treatment: &[bool], width: f64) -> Result<Vec<MatchedPair>> {
    if logit_ps.len() != treatment.len() {
        return Err(Error::DimensionMismatch {
            expected: treatment.len(),
            got: logit_ps.len(),
        });
    }
    if logit_ps.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("logit propensity scores contain NaN".into()));
    }
    let mut controls: BTreeSet<Key> = logit_ps
        .iter()
        .zip(treatment)
        .enumerate()
        .filter(|(_, (_, &t))| !t)
        .map(|(i, (&v, _))| Key(normalized(v), i))
        .collect();

    let mut pairs = Vec::new();
    for (t, (&v, _)) in logit_ps.iter().zip(treatment).enumerate().filter(|(_, (_, &a))| a) {
        if controls.is_empty() {
            break;
        }
        let v = normalized(v);
        let probe = Key(v, 0);
        let above = controls.range(probe..).next().copied();
        // lowest index among the controls sharing the largest value below v
        let below = controls
            .range(..probe)
            .next_back()
            .and_then(|k| controls.range(Key(k.0, 0)..).next().copied());

        let best = match (above, below) {
            (Some(a), Some(b)) => {
                let (da, db) = ((a.0 - v).abs(), (v - b.0).abs());
                if da < db || (da == db && a.1 < b.1) {
                    a
                } else {
                    b
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => continue,
        };
        if (best.0 - v).abs() <= width {
            controls.remove(&best);
            pairs.push(MatchedPair {
                treated: t,
                control: best.1,
            });
        }
    }
    Ok(pairs)
}

/// Matches `ds` on the fitted logit propensity scores.
pub fn nearest_neighbor_match<'a>(
    ds: &'a Dataset,
    fit: &PropensityFit,
    caliper: Caliper,
) -> Result<MatchedSample<'a>> {
    if fit.logit_ps.len() != ds.n() {
        return Err(Error::DimensionMismatch {
            expected: ds.n(),
            got: fit.logit_ps.len(),
        });
    }
    if !ds.has_both_classes() {
        return Err(Error::OneClassOnly);
    }
    let pairs = greedy_match(&fit.logit_ps, ds.treatment(), caliper.width())?;
    if pairs.is_empty() {
        return Err(Error::NoPairsFormed);
    }
    Ok(MatchedSample {
        source: ds,
        pairs,
        caliper,
    })
}

/// Pair counts along a descending schedule of caliper multipliers.
pub fn pair_count_curve(ds: &Dataset, fit: &PropensityFit, multipliers: &[f64]) -> Result<Vec<(f64, usize)>> {
    if multipliers.windows(2).any(|w| !(w[0] >= w[1])) {
        return Err(Error::InvalidArgument("caliper multipliers must be sorted descending".into()));
    }
    multipliers
        .iter()
        .map(|&m| {
            let caliper = Caliper::from_logit_ps(m, &fit.logit_ps)?;
            match nearest_neighbor_match(ds, fit, caliper) {
                Ok(matched) => Ok((m, matched.n_pairs())),
                Err(Error::NoPairsFormed) => Ok((m, 0)),
                Err(e) => Err(e),
            }
        })
        .collect()
}
