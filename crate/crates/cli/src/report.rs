use std::fmt::Write as _;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::evaluate::{Aggregate, EvalReport, REGIONS};
use crate::ReportArgs;

/// One CSV row: a date group (or `all`) and a region (or `all` for every
/// jointly valid pixel).
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Row {
    pub date: String,
    pub region: String,
    pub frames: usize,
    pub n_pixels: usize,
    pub pct_within_5: f64,
    pub pct_within_10: f64,
}

fn rows_for(date: &str, agg: &Aggregate) -> Vec<Row> {
    let mut out = Vec::new();
    let mut push = |region: &str, d: &embodied_depth::metrics::ErrorDistribution| {
        out.push(Row {
            date: date.to_string(),
            region: region.to_string(),
            frames: agg.frames,
            n_pixels: d.n_pixels,
            pct_within_5: d.pct_within_5,
            pct_within_10: d.pct_within_10,
        });
    };
    if let Some(d) = &agg.distribution {
        push("all", d);
    }
    for r in REGIONS {
        if let Some(d) = agg.regions.get(r) {
            push(r, d);
        }
    }
    out
}

/// Rows sorted by date, then region order; the overall group comes last.
pub fn rows(report: &EvalReport) -> Vec<Row> {
    let mut groups: Vec<&crate::evaluate::DateGroup> = report.by_date.iter().collect();
    groups.sort_by(|a, b| a.date.cmp(&b.date));
    let mut out: Vec<Row> = groups.iter().flat_map(|g| rows_for(&g.date, &g.aggregate)).collect();
    out.extend(rows_for("all", &report.aggregate));
    out
}

fn render_text(report: &EvalReport, rows: &[Row]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<12} {:<8} {:>7} {:>10} {:>9} {:>9}", "date", "region", "frames", "pixels", "<=5%", "<=10%");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<12} {:<8} {:>7} {:>10} {:>8.2}% {:>8.2}%",
            r.date,
            r.region,
            r.frames,
            r.n_pixels,
            100.0 * r.pct_within_5,
            100.0 * r.pct_within_10
        );
    }
    if let Some(m) = &report.aggregate.metrics {
        let _ = writeln!(
            s,
            "\nabs_rel {:.4}  sq_rel {:.4}  rmse {:.3}  rmse_log {:.4}  d1 {:.4}  d2 {:.4}  d3 {:.4}  ({} px)",
            m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3, m.n_pixels
        );
    }
    s
}

pub fn run(args: ReportArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let report: EvalReport = serde_json::from_str(&text).context("input is not an evaluate report")?;
    let rows = rows(&report);
    let table = render_text(&report, &rows);
    match &args.out_text {
        Some(p) => std::fs::write(p, &table)?,
        None => print!("{table}"),
    }
    if let Some(p) = &args.out_csv {
        let mut w = csv::Writer::from_path(p).with_context(|| format!("cannot write {}", p.display()))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(())
}
