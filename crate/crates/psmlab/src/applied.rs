//! Matching a user-supplied CSV file.

use std::fs;
use std::path::{Path, PathBuf};

use psmlab_core::balance::{balance_report, refit_on_matched, BalanceReport};
use psmlab_core::datagen::Dataset;
use psmlab_core::matching::{nearest_neighbor_match, Caliper};
use psmlab_core::numerics::{covariance_matrix, Matrix};
use psmlab_core::propensity::fit_logistic;

use crate::error::{csv_error, Error, Result};

pub const MATCHED_FILE: &str = "matched.csv";
pub const REPORT_FILE: &str = "balance_report.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct AppliedMatch {
    /// `(treated row, control row)` per pair, 0-based data row indices.
    pub pairs: Vec<(usize, usize)>,
    pub caliper_width: f64,
    pub report: BalanceReport,
    pub matched_path: PathBuf,
    pub report_path: PathBuf,
}

fn parse_treatment(raw: &str, row: usize, column: &str) -> Result<bool> {
    match raw.trim() {
        "1" | "1.0" | "true" | "TRUE" => Ok(true),
        "0" | "0.0" | "false" | "FALSE" => Ok(false),
        other => Err(Error::Parse(format!(
            "treatment column {column:?} must be binary (0/1); found {other:?} on data row {}",
            row + 1
        ))),
    }
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Parse(format!("{}: no column named {name:?}", path.display())))
}

/// Fits a logistic propensity model of `treatment_column` on
/// `covariate_columns`, matches 1:1 within `caliper_multiplier × SD(logit PS)`,
/// and writes `matched.csv` and `balance_report.csv` into `out`.
///
/// `matched.csv` repeats the input columns, preceded by `pair_id` (from 1)
/// and `row` (0-based data row), treated unit first in each pair.
pub fn applied_match(
    input: &Path,
    treatment_column: &str,
    covariate_columns: &[String],
    caliper_multiplier: f64,
    out: &Path,
) -> Result<AppliedMatch> {
    if covariate_columns.is_empty() {
        return Err(Error::Config("at least one covariate column is required".into()));
    }
    if !(caliper_multiplier >= 0.0 && caliper_multiplier.is_finite()) {
        return Err(Error::Config(format!("caliper must be non-negative, got {caliper_multiplier}")));
    }
    let mut reader = csv::Reader::from_path(input).map_err(|e| csv_error(input, e))?;
    let headers = reader.headers().map_err(|e| csv_error(input, e))?.clone();
    let t_col = column_index(&headers, treatment_column, input)?;
    let x_cols = covariate_columns
        .iter()
        .map(|c| column_index(&headers, c, input))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut treatment = Vec::new();
    let mut data = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(input, e))?;
        treatment.push(parse_treatment(&rec[t_col], row, treatment_column)?);
        for (&j, name) in x_cols.iter().zip(covariate_columns) {
            let v: f64 = rec[j].trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "covariate {name:?} has non-numeric value {:?} on data row {}",
                    &rec[j],
                    row + 1
                ))
            })?;
            data.push(v);
        }
        records.push(rec);
    }
    let n = records.len();
    let n_treated = treatment.iter().filter(|&&t| t).count();
    if n_treated == 0 || n_treated == n {
        return Err(psmlab_core::Error::OneClassOnly.into());
    }

    let x = Matrix::from_row_major(n, x_cols.len(), data)?;
    let ds = Dataset::new(x, treatment, vec![0.0; n])?;
    let fit = fit_logistic(ds.x(), ds.treatment())?;
    let caliper = Caliper::from_logit_ps(caliper_multiplier, &fit.logit_ps)?;
    let matched = nearest_neighbor_match(&ds, &fit, caliper)?;
    let sigma = covariance_matrix(ds.x())?;
    let refit = refit_on_matched(&matched).ok().filter(|f| f.converged);
    let report = match balance_report(&matched, &sigma, refit.as_ref()) {
        Ok(r) => r,
        // a single pair has no within-group variance; report distances only
        Err(psmlab_core::Error::TooFewPairs { .. }) => BalanceReport {
            smd: vec![f64::NAN; ds.p()],
            mahalanobis_means: psmlab_core::balance::mahalanobis_means(&matched, &sigma)?,
            pairwise_ix: psmlab_core::balance::pairwise_imbalance(&matched, &sigma)?,
            c_stat: None,
            n_pairs: matched.n_pairs(),
        },
        Err(e) => return Err(e.into()),
    };

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let matched_path = out.join(MATCHED_FILE);
    let mut w = csv::Writer::from_path(&matched_path).map_err(|e| csv_error(&matched_path, e))?;
    let mut header = vec!["pair_id".to_string(), "row".to_string()];
    header.extend(headers.iter().map(str::to_string));
    w.write_record(&header).map_err(|e| csv_error(&matched_path, e))?;
    for (k, pair) in matched.pairs().iter().enumerate() {
        for unit in [pair.treated, pair.control] {
            let mut line = vec![(k + 1).to_string(), unit.to_string()];
            line.extend(records[unit].iter().map(str::to_string));
            w.write_record(&line).map_err(|e| csv_error(&matched_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&matched_path, e))?;

    let report_path = out.join(REPORT_FILE);
    let mut w = csv::Writer::from_path(&report_path).map_err(|e| csv_error(&report_path, e))?;
    let mut rows: Vec<(String, String)> = vec![
        ("n_units".into(), n.to_string()),
        ("n_treated".into(), n_treated.to_string()),
        ("caliper_multiplier".into(), caliper_multiplier.to_string()),
        ("caliper_width".into(), caliper.width().to_string()),
        ("n_pairs".into(), report.n_pairs.to_string()),
    ];
    for (name, d) in covariate_columns.iter().zip(&report.smd) {
        rows.push((format!("smd_{name}"), d.to_string()));
    }
    rows.push(("mahalanobis_means".into(), report.mahalanobis_means.to_string()));
    rows.push(("pairwise_ix".into(), report.pairwise_ix.to_string()));
    rows.push(("c_stat".into(), report.c_stat.map_or("NA".into(), |c| c.to_string())));
    w.write_record(["metric", "value"]).map_err(|e| csv_error(&report_path, e))?;
    for (k, v) in &rows {
        w.write_record([k, v]).map_err(|e| csv_error(&report_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&report_path, e))?;

    Ok(AppliedMatch {
        pairs: matched.pairs().iter().map(|p| (p.treated, p.control)).collect(),
        caliper_width: caliper.width(),
        report,
        matched_path,
        report_path,
    })
}
