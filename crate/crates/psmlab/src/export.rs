//! CSV result files.
//!
//! `balance.csv` and `estimates.csv` have fixed headers (see the constants
//! below). Rows for the unmatched arm carry `unmatched` in the
//! `caliper_multiplier` column. `cherry_pick.csv` and `failures.csv` hold the
//! model-dependence diagnostic and the failure tallies.

use std::fs;
use std::path::{Path, PathBuf};

use psmlab_core::harness::{EstimateSummary, ScenarioSummary};

use crate::error::{csv_error, Error, Result};

pub const BALANCE_FILE: &str = "balance.csv";
pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const CHERRY_PICK_FILE: &str = "cherry_pick.csv";
pub const FAILURES_FILE: &str = "failures.csv";

pub const BALANCE_HEADER: [&str; 9] = [
    "scenario_id",
    "caliper_multiplier",
    "mean_pairs",
    "mean_smd_x3",
    "prop_abs_smd_x3_gt_0.1",
    "mahalanobis_means",
    "pairwise_ix",
    "c_stat",
    "mc_se_smd_x3",
];

pub const ESTIMATES_HEADER: [&str; 9] = [
    "scenario_id",
    "caliper_multiplier",
    "model_spec",
    "mean_estimate",
    "bias",
    "empirical_se",
    "mean_se_model",
    "mean_se_sandwich",
    "n_replicates_used",
];

pub const CHERRY_PICK_HEADER: [&str; 6] = [
    "scenario_id",
    "caliper_multiplier",
    "mean_max_estimate",
    "mc_se_max_estimate",
    "mean_model_variance",
    "n_replicates_used",
];

pub const FAILURES_HEADER: [&str; 4] = ["scenario_id", "stage", "kind", "count"];

/// Label used in the caliper column for estimates on unmatched data.
pub const UNMATCHED_LABEL: &str = "unmatched";

fn writer(dir: &Path, name: &str, header: &[&str]) -> Result<(csv::Writer<fs::File>, PathBuf)> {
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(|e| csv_error(&path, e))?;
    Ok((w, path))
}

fn num(v: f64) -> String {
    v.to_string()
}

fn estimate_row(id: &str, caliper: &str, e: &EstimateSummary) -> [String; 9] {
    [
        id.to_string(),
        caliper.to_string(),
        e.spec.name(),
        num(e.estimate.mean),
        num(e.bias),
        num(e.empirical_se()),
        num(e.se_model.mean),
        num(e.se_sandwich.mean),
        e.n_replicates_used().to_string(),
    ]
}

/// Writes the four result files for `summaries` into `dir`, creating the
/// directory if needed. Returns the paths written.
pub fn write_results(summaries: &[ScenarioSummary], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (mut balance, balance_path) = writer(dir, BALANCE_FILE, &BALANCE_HEADER)?;
    let (mut estimates, estimates_path) = writer(dir, ESTIMATES_FILE, &ESTIMATES_HEADER)?;
    let (mut cherry, cherry_path) = writer(dir, CHERRY_PICK_FILE, &CHERRY_PICK_HEADER)?;
    let (mut failures, failures_path) = writer(dir, FAILURES_FILE, &FAILURES_HEADER)?;

    for s in summaries {
        let id = s.scenario_id.as_str();
        for c in &s.calipers {
            let caliper = num(c.multiplier);
            balance
                .write_record([
                    id.to_string(),
                    caliper.clone(),
                    num(c.pairs.mean),
                    num(c.smd_x3.mean),
                    num(c.smd_x3_imbalanced.mean),
                    num(c.mahalanobis_means.mean),
                    num(c.pairwise_ix.mean),
                    num(c.c_stat.mean),
                    num(c.smd_x3.mc_se()),
                ])
                .map_err(|e| csv_error(&balance_path, e))?;
            for e in &c.estimates {
                estimates
                    .write_record(estimate_row(id, &caliper, e))
                    .map_err(|e| csv_error(&estimates_path, e))?;
            }
            cherry
                .write_record([
                    id.to_string(),
                    caliper,
                    num(c.cherry_pick_max.mean),
                    num(c.cherry_pick_max.mc_se()),
                    num(c.cherry_pick_variance.mean),
                    c.cherry_pick_max.n.to_string(),
                ])
                .map_err(|e| csv_error(&cherry_path, e))?;
        }
        for e in s.unmatched.iter().flatten() {
            estimates
                .write_record(estimate_row(id, UNMATCHED_LABEL, e))
                .map_err(|e| csv_error(&estimates_path, e))?;
        }
        for ((stage, kind), count) in &s.failures {
            failures
                .write_record([id, stage.name(), kind, &count.to_string()])
                .map_err(|e| csv_error(&failures_path, e))?;
        }
    }

    let paths = vec![balance_path, estimates_path, cherry_path, failures_path];
    for (w, path) in [balance, estimates, cherry, failures].into_iter().zip(&paths) {
        w.into_inner()
            .map_err(|e| Error::io(path, e.into_error()))?
            .sync_all()
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(paths)
}
