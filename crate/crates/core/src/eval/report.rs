//! Report tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::EvalReport;
use crate::error::{Error, Result};

/// One line of the report CSV: policy × evaluator × seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub family: String,
    pub seed: u64,
    pub policy: String,
    pub evaluator: String,
    pub n_rows: usize,
    pub cumulative_reward: f64,
    pub mapd: f64,
    pub mean_price: f64,
    pub uplift: f64,
    pub percent_of_optimal: Option<f64>,
}

impl ReportRow {
    pub fn from_report(family: &str, seed: u64, r: &EvalReport) -> Self {
        Self {
            family: family.to_string(),
            seed,
            policy: r.policy.clone(),
            evaluator: r.evaluator.clone(),
            n_rows: r.n_rows,
            cumulative_reward: r.cumulative_reward,
            mapd: r.mapd,
            mean_price: r.mean_price,
            uplift: r.uplift,
            percent_of_optimal: r.percent_of_optimal,
        }
    }
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Data(format!("csv flush: {e}")))?;
    Ok(())
}

/// Markdown table of % of optimal return and MAPD per family and policy,
/// averaged over seeds, for rows evaluated under `evaluator`.
pub fn summary_markdown(rows: &[ReportRow], evaluator: &str) -> String {
    let mut groups: BTreeMap<(String, String), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.evaluator == evaluator) {
        groups.entry((r.family.clone(), r.policy.clone())).or_default().push(r);
    }
    let mut out = String::new();
    let _ = writeln!(out, "Evaluator: `{evaluator}`\n");
    let _ = writeln!(out, "| Family | Policy | % of Optimal Return | MAPD | Uplift | Seeds |");
    let _ = writeln!(out, "|---|---|---:|---:|---:|---|");
    for ((family, policy), g) in &groups {
        let n = g.len() as f64;
        let pct: Vec<f64> = g.iter().filter_map(|r| r.percent_of_optimal).collect();
        let pct = if pct.is_empty() {
            "n/a".to_string()
        } else {
            format!("{:.1}%", 100.0 * pct.iter().sum::<f64>() / pct.len() as f64)
        };
        let mapd = g.iter().map(|r| r.mapd).sum::<f64>() / n;
        let uplift = g.iter().map(|r| r.uplift).sum::<f64>() / n;
        let seeds: Vec<String> = g.iter().map(|r| r.seed.to_string()).collect();
        let _ = writeln!(
            out,
            "| {family} | {policy} | {pct} | {:.1}% | {:.1}% | {} |",
            100.0 * mapd,
            100.0 * uplift,
            seeds.join(", ")
        );
    }
    out
}
