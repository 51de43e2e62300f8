//! Metrics CSV emission.
//!
//! Numbers carry 6 significant digits: fixed notation, or scientific when
//! `|x| < 1e-3`. Zero prints as `0` and missing values as an empty cell.

use std::fmt::Write as _;
use std::path::Path;

use super::FormatError;
use crate::bounds::{BandSplit, BoundReport};
use crate::domain::Reduction;
use crate::extract::Strategy;

pub const METRICS_HEADER: &str =
    "interval,reduction,strategy,ranks,bto_s,exchange_s,speedup,discarded_pct,greatest_max_l2,avg_max_l2,total_avg_l2,accuracy_pct";

/// One configuration, in the column order of [`METRICS_HEADER`].
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub interval: u64,
    pub reduction: Reduction,
    pub strategy: Strategy,
    pub ranks: usize,
    /// Mean per-cycle seconds, write cycles excluded.
    pub bto_s: Option<f64>,
    pub exchange_s: Option<f64>,
    pub speedup: Option<f64>,
    /// Seeds terminated at block boundaries, percent.
    pub discarded_pct: Option<f64>,
    pub greatest_max_l2: Option<f64>,
    pub avg_max_l2: Option<f64>,
    pub total_avg_l2: Option<f64>,
    pub accuracy_pct: Option<f64>,
}

impl MetricsRow {
    pub fn new(interval: u64, reduction: Reduction, strategy: Strategy, ranks: usize) -> Self {
        MetricsRow {
            interval,
            reduction,
            strategy,
            ranks,
            bto_s: None,
            exchange_s: None,
            speedup: None,
            discarded_pct: None,
            greatest_max_l2: None,
            avg_max_l2: None,
            total_avg_l2: None,
            accuracy_pct: None,
        }
    }

    fn numbers(&self) -> [Option<f64>; 8] {
        [
            self.bto_s,
            self.exchange_s,
            self.speedup,
            self.discarded_pct,
            self.greatest_max_l2,
            self.avg_max_l2,
            self.total_avg_l2,
            self.accuracy_pct,
        ]
    }
}

pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    if x.abs() < 1e-3 {
        return sci;
    }
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    format!("{x:.*}", (5 - exp).max(0) as usize)
}

fn cell(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{},{}", r.interval, r.reduction, r.strategy.as_str(), r.ranks);
        for v in r.numbers() {
            out.push(',');
            out.push_str(&cell(v));
        }
        out.push('\n');
    }
    out
}

pub fn emit_metrics(rows: &[MetricsRow], path: &Path) -> Result<(), FormatError> {
    if rows.is_empty() {
        return Err(FormatError::Malformed("no metrics rows to emit".into()));
    }
    std::fs::write(path, metrics_csv(rows))?;
    Ok(())
}

pub const BOUNDS_HEADER: &str = "interval,reduction,hx,ht,vmax,hx_tilde,predicted_order,measured_order,near_mean_l2,near_count,far_mean_l2,far_count";

#[derive(Clone, Debug, PartialEq)]
pub struct BoundsRow {
    pub interval: u64,
    pub reduction: Reduction,
    pub report: BoundReport,
    pub bands: BandSplit,
}

pub fn bounds_csv(rows: &[BoundsRow]) -> String {
    let mut out = String::from(BOUNDS_HEADER);
    out.push('\n');
    for r in rows {
        let b = &r.report;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.interval,
            r.reduction,
            format_number(b.hx),
            format_number(b.ht),
            format_number(b.vmax),
            format_number(b.hx_tilde),
            format_number(b.predicted_order),
            cell(b.measured_order),
            format_number(r.bands.near_mean),
            r.bands.near_count,
            format_number(r.bands.far_mean),
            r.bands.far_count
        );
    }
    out
}
