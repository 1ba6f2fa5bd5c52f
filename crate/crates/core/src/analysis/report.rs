//! CSV emitters. Numbers use the shortest representation that round-trips.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConfusionCounts, EdgeStat, Metrics, Recurrence};
use crate::error::{Error, Result};

pub(crate) fn num(v: f64) -> String {
    if v == 0.0 || (1e-4..1e6).contains(&v.abs()) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), num)
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub pipeline: String,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut s = String::from("pipeline,tp,fp,fn,tn,acc,recall,precision,f1\n");
    for r in rows {
        let c = &r.counts;
        let m = &r.metrics;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.pipeline,
            c.tp,
            c.fp,
            c.fn_,
            c.tn,
            opt(m.acc),
            opt(m.recall),
            opt(m.precision),
            opt(m.f1)
        )
        .expect("string write");
    }
    write(path, s)
}

/// Ranked edge table; `rank` starts at 1.
pub fn write_edge_stats_csv(path: &Path, stats: &[EdgeStat]) -> Result<()> {
    let mut s = String::from("rank,i,j,t_value,p_value\n");
    for (k, e) in stats.iter().enumerate() {
        writeln!(s, "{},{},{},{},{}", k + 1, e.i, e.j, num(e.t_value), num(e.p_value)).expect("string write");
    }
    write(path, s)
}

pub fn write_recurrence_csv(path: &Path, r: &Recurrence) -> Result<()> {
    let mut s = String::from("kind,i,j,count\n");
    for ((i, j), c) in &r.edges {
        writeln!(s, "edge,{i},{j},{c}").expect("string write");
    }
    for (v, c) in &r.nodes {
        writeln!(s, "node,{v},,{c}").expect("string write");
    }
    write(path, s)
}

/// Two-column plot data.
pub fn write_series_csv(path: &Path, x_name: &str, y_name: &str, points: &[(f64, f64)]) -> Result<()> {
    let mut s = format!("{x_name},{y_name}\n");
    for (x, y) in points {
        writeln!(s, "{},{}", num(*x), num(*y)).expect("string write");
    }
    write(path, s)
}
