//! SVG line charts of a results directory, one file per panel.
//!
//! For every scenario in `balance.csv`/`estimates.csv` six panels are drawn
//! against the caliper schedule (largest caliper on the left):
//!
//! | panel | content |
//! |-------|---------|
//! | A | between-means Mahalanobis distance |
//! | B | proportion of replicates with \|SMD(X₃)\| > 0.1 |
//! | C | mean SMD of X₃ |
//! | D | mean estimate per model, true effect and unmatched estimates as dashed lines |
//! | E | empirical, model-based and sandwich SEs for every model except `MFull` |
//! | F | empirical and model-based SEs for `MFull` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{csv_error, Error, Result};
use crate::export::{BALANCE_FILE, ESTIMATES_FILE, UNMATCHED_LABEL};

#[derive(Debug, Deserialize)]
struct BalanceRow {
    scenario_id: String,
    caliper_multiplier: String,
    mean_smd_x3: f64,
    #[serde(rename = "prop_abs_smd_x3_gt_0.1")]
    prop_abs_smd_x3_gt: f64,
    mahalanobis_means: f64,
}

#[derive(Debug, Deserialize)]
struct EstimateRow {
    scenario_id: String,
    caliper_multiplier: String,
    model_spec: String,
    mean_estimate: f64,
    bias: f64,
    empirical_se: f64,
    mean_se_model: f64,
    mean_se_sandwich: f64,
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_error(path, e))
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
    pub dashed: bool,
}

impl Series {
    fn solid(name: impl Into<String>, values: Vec<f64>) -> Self {
        Series {
            name: name.into(),
            values,
            dashed: false,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Renders a line chart with one point per x label. Non-finite values leave
/// gaps. A series whose values are all equal and `dashed` is drawn as a
/// horizontal reference line.
pub fn line_chart(title: &str, y_label: &str, x_labels: &[String], series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let finite = series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    let n = x_labels.len().max(1);
    let x_at = |i: usize| left + if n == 1 { pw / 2.0 } else { pw * i as f64 / (n - 1) as f64 };
    let y_at = |v: f64| top + ph * (hi - v) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = y_at(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0,
            format_tick(v)
        );
    }
    for (i, label) in x_labels.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            x_at(i),
            top + ph + 18.0,
            escape(label)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">caliper multiplier (× SD of logit PS)</text>"#,
        left + pw / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">{}</text>"#,
        top + ph / 2.0,
        escape(y_label)
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let mut segment: Vec<(f64, f64)> = Vec::new();
        let mut segments = Vec::new();
        for (i, &v) in s.values.iter().enumerate() {
            if v.is_finite() {
                segment.push((x_at(i), y_at(v)));
            } else if !segment.is_empty() {
                segments.push(std::mem::take(&mut segment));
            }
        }
        segments.push(segment);
        for seg in segments.iter().filter(|s| !s.is_empty()) {
            let points: Vec<String> = seg.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
                points.join(" ")
            );
            if !s.dashed {
                for (x, y) in seg {
                    let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
                }
            }
        }
        let ly = top + 10.0 + 18.0 * k as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 0.01 && v.abs() < 1e4 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Scenario {
    calipers: Vec<String>,
    balance: Vec<BalanceRow>,
    estimates: Vec<EstimateRow>,
}

fn group(balance: Vec<BalanceRow>, estimates: Vec<EstimateRow>) -> BTreeMap<String, Scenario> {
    let mut out: BTreeMap<String, Scenario> = BTreeMap::new();
    for row in balance {
        let s = out.entry(row.scenario_id.clone()).or_insert_with(|| Scenario {
            calipers: Vec::new(),
            balance: Vec::new(),
            estimates: Vec::new(),
        });
        s.calipers.push(row.caliper_multiplier.clone());
        s.balance.push(row);
    }
    for row in estimates {
        if let Some(s) = out.get_mut(&row.scenario_id) {
            s.estimates.push(row);
        }
    }
    out
}

fn spec_names(rows: &[EstimateRow]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for r in rows {
        if !names.contains(&r.model_spec) {
            names.push(r.model_spec.clone());
        }
    }
    names
}

fn per_caliper(s: &Scenario, spec: &str, f: fn(&EstimateRow) -> f64) -> Vec<f64> {
    s.calipers
        .iter()
        .map(|c| {
            s.estimates
                .iter()
                .find(|r| &r.caliper_multiplier == c && r.model_spec == spec)
                .map_or(f64::NAN, f)
        })
        .collect()
}

fn panels(id: &str, s: &Scenario) -> Vec<(char, String)> {
    let k = s.calipers.len();
    let bal = |f: fn(&BalanceRow) -> f64| s.balance.iter().map(f).collect::<Vec<_>>();
    let specs = spec_names(&s.estimates);
    let mut out = vec![
        (
            'A',
            line_chart(
                &format!("{id}: A) Mahalanobis distance of means"),
                "Mahalanobis distance",
                &s.calipers,
                &[Series::solid("matched", bal(|r| r.mahalanobis_means))],
            ),
        ),
        (
            'B',
            line_chart(
                &format!("{id}: B) proportion |SMD(X3)| > 0.1"),
                "proportion",
                &s.calipers,
                &[Series::solid("X3", bal(|r| r.prop_abs_smd_x3_gt))],
            ),
        ),
        (
            'C',
            line_chart(
                &format!("{id}: C) SMD of X3"),
                "mean SMD",
                &s.calipers,
                &[Series::solid("X3", bal(|r| r.mean_smd_x3))],
            ),
        ),
    ];

    let mut d: Vec<Series> = specs
        .iter()
        .map(|m| Series::solid(m.clone(), per_caliper(s, m, |r| r.mean_estimate)))
        .collect();
    if let Some(r) = s.estimates.iter().find(|r| r.mean_estimate.is_finite() && r.bias.is_finite()) {
        d.push(Series {
            name: "true effect".into(),
            values: vec![r.mean_estimate - r.bias; k],
            dashed: true,
        });
    }
    for r in s.estimates.iter().filter(|r| r.caliper_multiplier == UNMATCHED_LABEL) {
        d.push(Series {
            name: format!("{} unmatched", r.model_spec),
            values: vec![r.mean_estimate; k],
            dashed: true,
        });
    }
    out.push(('D', line_chart(&format!("{id}: D) effect estimates"), "mean estimate", &s.calipers, &d)));

    let mut e = Vec::new();
    for m in specs.iter().filter(|m| m.as_str() != "MFull") {
        e.push(Series::solid(format!("{m} empirical"), per_caliper(s, m, |r| r.empirical_se)));
        e.push(Series::solid(format!("{m} model"), per_caliper(s, m, |r| r.mean_se_model)));
        e.push(Series::solid(format!("{m} sandwich"), per_caliper(s, m, |r| r.mean_se_sandwich)));
    }
    out.push(('E', line_chart(&format!("{id}: E) standard errors"), "standard error", &s.calipers, &e)));
    let f = vec![
        Series::solid("MFull empirical", per_caliper(s, "MFull", |r| r.empirical_se)),
        Series::solid("MFull model", per_caliper(s, "MFull", |r| r.mean_se_model)),
    ];
    out.push(('F', line_chart(&format!("{id}: F) MFull standard errors"), "standard error", &s.calipers, &f)));
    out
}

/// Reads `balance.csv` and `estimates.csv` from `results` and writes
/// `<scenario_id>_<panel>.svg` files into `out`.
pub fn render_figures(results: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let balance: Vec<BalanceRow> = read_rows(&results.join(BALANCE_FILE))?;
    let estimates: Vec<EstimateRow> = read_rows(&results.join(ESTIMATES_FILE))?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    for (id, scenario) in group(balance, estimates) {
        for (panel, svg) in panels(&id, &scenario) {
            let path = out.join(format!("{id}_{panel}.svg"));
            fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
