//! Report documents and their CSV/JSON renderings. JSON keeps full
//! precision; CSV reals use six fractional digits.

use std::path::Path;

use ecbench::compare::{AsymmetryReport, ComparisonReport, GroupResult, OVERALL};
use ecbench::oracle::{BestLevelRow, CoverageResult};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Picks the format from a file extension, defaulting to JSON.
    pub fn for_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Format::Csv,
            _ => Format::Json,
        }
    }
}

/// A comparison report with the fingerprints of everything it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonDocument {
    pub tool_version: String,
    pub space_fingerprint: String,
    pub plan_fingerprint: String,
    pub minuend_results_digest: String,
    pub subtrahend_results_digest: String,
    pub report: ComparisonReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageDocument {
    pub tool_version: String,
    pub space_fingerprint: String,
    pub model_fingerprint: String,
    pub minuend: String,
    pub subtrahend: String,
    pub iterations: u32,
    pub level: f64,
    pub master_seed: u64,
    pub rows: Vec<CoverageResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestLevelDocument {
    pub tool_version: String,
    pub space_fingerprint: String,
    pub results_digest: String,
    pub object: String,
    pub target_factor: String,
    pub group_factor: String,
    pub rows: Vec<BestLevelRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryDocument {
    pub tool_version: String,
    pub report: AsymmetryReport,
}

/// Six fractional digits, with negative zero printed as zero.
pub fn fixed(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn group_row(g: &GroupResult, level: f64) -> Vec<String> {
    let (lo, hi) = match &g.interval {
        Some(i) => (fixed(i.low), fixed(i.high)),
        None => (String::new(), String::new()),
    };
    vec![
        g.group.clone(),
        g.n.to_string(),
        fixed(g.mean_diff),
        lo,
        hi,
        fixed(level),
        g.verdict.map(|v| v.as_str().to_string()).unwrap_or_default(),
    ]
}

/// One row per group; grouped reports add the pooled row last.
pub fn comparison_csv(report: &ComparisonReport) -> String {
    let mut rows: Vec<Vec<String>> = report
        .groups
        .iter()
        .map(|g| group_row(g, report.level))
        .collect();
    if report.flags.grouping.is_some() {
        rows.push(group_row(&report.overall, report.level));
    }
    debug_assert!(report.flags.grouping.is_some() || report.groups[0].group == OVERALL);
    csv_text(
        &["group", "n", "mean_diff", "ci_lo", "ci_hi", "level", "verdict"],
        rows,
    )
}

/// The methodology comparison table, rows in input order.
pub fn coverage_csv(rows: &[CoverageResult]) -> String {
    csv_text(
        &["methodology", "params", "cost_per_object", "iterations", "coverage"],
        rows.iter()
            .map(|r| {
                vec![
                    r.methodology.clone(),
                    r.params.clone(),
                    r.cost_per_object.to_string(),
                    r.iterations.to_string(),
                    fixed(r.coverage),
                ]
            })
            .collect(),
    )
}

pub fn best_level_csv(doc: &BestLevelDocument) -> String {
    let best = format!("best_{}", doc.target_factor);
    csv_text(
        &[doc.group_factor.as_str(), best.as_str(), "mean_time", "candidates"],
        doc.rows
            .iter()
            .map(|r| {
                vec![
                    r.group.clone(),
                    r.best_level.clone(),
                    fixed(r.mean_time),
                    r.candidates.to_string(),
                ]
            })
            .collect(),
    )
}

pub fn asymmetry_csv(report: &AsymmetryReport) -> String {
    let row = |view: &str, i: &ecbench::stats::Interval, reading: String| {
        vec![
            view.to_string(),
            fixed(i.center),
            fixed(i.low),
            fixed(i.high),
            reading,
        ]
    };
    let reading = |r: ecbench::compare::RatioReading| format!("{r:?}");
    csv_text(
        &["view", "center", "ci_lo", "ci_hi", "reading"],
        vec![
            row(
                &format!("{}-{}", report.a, report.b),
                &report.difference_a_minus_b,
                ecbench::compare::verdict_of(&report.difference_a_minus_b)
                    .kind
                    .as_str()
                    .to_string(),
            ),
            row(
                &format!("{}-{}", report.b, report.a),
                &report.difference_b_minus_a,
                ecbench::compare::verdict_of(&report.difference_b_minus_a)
                    .kind
                    .as_str()
                    .to_string(),
            ),
            row(
                &format!("{}/{}", report.b, report.a),
                &report.ratio_baseline_a.interval,
                reading(report.ratio_baseline_a.reading),
            ),
            row(
                &format!("{}/{}", report.a, report.b),
                &report.ratio_baseline_b.interval,
                reading(report.ratio_baseline_b.reading),
            ),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ecbench::compare::compare_objects;
    use ecbench::runner::ResultSet;

    #[test]
    fn fixed_formatting() {
        assert_eq!(fixed(1.0 / 3.0), "0.333333");
        assert_eq!(fixed(-1e-9), "0.000000");
        assert_eq!(fixed(-17.736), "-17.736000");
    }

    #[test]
    fn single_group_has_one_row() {
        let a = ResultSet::from_aggregates("a", &[3.0, 4.0, 9.0]);
        let b = ResultSet::from_aggregates("b", &[1.0, 4.0, 5.0]);
        let r = compare_objects(&a, &b, 0.95, None).unwrap();
        let text = comparison_csv(&r);
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("group,n,mean_diff,ci_lo,ci_hi,level,verdict\nall,3,2.000000,"));
        assert_eq!(text, comparison_csv(&r));
    }
}
