//! Classification metrics, connection counting and per-edge group tests.

mod report;
mod stats;

pub use report::{
    write_edge_stats_csv, write_metrics_csv, write_recurrence_csv, write_series_csv, MetricsRow,
};
pub use stats::{
    bonferroni_alpha, edge_ttests, edge_ttests_with, t_two_sided_p, two_sample_t, TTestKind, TwoSample,
};

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    /// Tallies binary outcomes; `positive` marks the positive class.
    pub fn from_predictions(labels: &[usize], predicted: &[usize], positive: usize) -> Self {
        let mut c = ConfusionCounts::default();
        for (&y, &p) in labels.iter().zip(predicted) {
            match (y == positive, p == positive) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Metric values; `None` marks a zero denominator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let acc = ratio(c.tp + c.tn, c.total());
    let recall = ratio(c.tp, c.tp + c.fn_);
    let precision = ratio(c.tp, c.tp + c.fp);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Metrics {
        acc,
        recall,
        precision,
        f1,
    }
}

/// Number of entries `i < j` with `|m_ij| > threshold`.
pub fn count_connections(m: &DMatrix<f64>, threshold: f64) -> usize {
    let n = m.nrows();
    (0..n)
        .flat_map(|j| (0..j).map(move |i| (i, j)))
        .filter(|&(i, j)| m[(i, j)].abs() > threshold)
        .count()
}

/// Per-subject connection count averaged over a sample.
pub fn mean_connection_count(mats: &[DMatrix<f64>], threshold: f64) -> f64 {
    if mats.is_empty() {
        return 0.0;
    }
    mats.iter().map(|m| count_connections(m, threshold) as f64).sum::<f64>() / mats.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeStat {
    pub i: usize,
    pub j: usize,
    pub t_value: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub edges: Vec<EdgeStat>,
    /// Edges with `p < alpha` before truncation to `k`.
    pub significant: usize,
}

/// Edges with `p < alpha`, ascending by p (ties by `(i, j)`), at most `k`.
pub fn top_k_abnormal(stats: &[EdgeStat], k: usize, alpha: f64) -> TopK {
    let mut hits: Vec<EdgeStat> = stats.iter().filter(|s| s.p_value < alpha).copied().collect();
    hits.sort_by(|a, b| a.p_value.total_cmp(&b.p_value).then((a.i, a.j).cmp(&(b.i, b.j))));
    let significant = hits.len();
    hits.truncate(k);
    TopK {
        edges: hits,
        significant,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recurrence {
    /// `((i, j), reports containing the edge)`, descending count.
    pub edges: Vec<((usize, usize), usize)>,
    /// `(node, reports in which the node touches a listed edge)`.
    pub nodes: Vec<(usize, usize)>,
}

/// Counts how often edges and nodes recur across ranked lists.
pub fn cross_experiment_recurrence(reports: &[Vec<EdgeStat>]) -> Result<Recurrence> {
    if reports.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "recurrence needs at least 2 reports, got {}",
            reports.len()
        )));
    }
    let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut nodes: BTreeMap<usize, usize> = BTreeMap::new();
    for r in reports {
        let e: std::collections::BTreeSet<(usize, usize)> = r.iter().map(|s| (s.i.min(s.j), s.i.max(s.j))).collect();
        let v: std::collections::BTreeSet<usize> = e.iter().flat_map(|&(i, j)| [i, j]).collect();
        for k in e {
            *edges.entry(k).or_default() += 1;
        }
        for k in v {
            *nodes.entry(k).or_default() += 1;
        }
    }
    let mut edges: Vec<_> = edges.into_iter().collect();
    edges.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut nodes: Vec<_> = nodes.into_iter().collect();
    nodes.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(Recurrence { edges, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cc(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    #[test]
    fn perfect_classifier() {
        let m = metrics(&cc(5, 0, 0, 5));
        assert_eq!((m.acc, m.recall, m.precision, m.f1), (Some(1.0), Some(1.0), Some(1.0), Some(1.0)));
    }

    #[test]
    fn mixed_counts() {
        let m = metrics(&cc(3, 1, 2, 4));
        assert!((m.acc.unwrap() - 0.7).abs() < 1e-15);
        assert!((m.recall.unwrap() - 0.6).abs() < 1e-15);
        assert!((m.precision.unwrap() - 0.75).abs() < 1e-15);
        assert!((m.f1.unwrap() - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-12);
    }

    #[test]
    fn undefined_precision() {
        let m = metrics(&cc(0, 0, 3, 2));
        assert_eq!(m.precision, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.recall, Some(0.0));
    }

    #[test]
    fn counting() {
        assert_eq!(count_connections(&DMatrix::zeros(4, 4), 0.1), 0);
        let mut ones = DMatrix::from_element(4, 4, 1.0);
        ones.fill_diagonal(0.0);
        assert_eq!(count_connections(&ones, 0.5), 6);
        assert_eq!(count_connections(&ones, 1.0), 0);
    }

    fn e(i: usize, j: usize, p: f64) -> EdgeStat {
        EdgeStat { i, j, t_value: 0.0, p_value: p }
    }

    #[test]
    fn top_k_filters_and_sorts() {
        assert!(top_k_abnormal(&[e(0, 1, 1.0), e(0, 2, 1.0)], 30, 0.05).edges.is_empty());
        let t = top_k_abnormal(&[e(0, 1, 1.0), e(1, 2, 0.01)], 30, 0.05);
        assert_eq!(t.edges, vec![e(1, 2, 0.01)]);
        let t = top_k_abnormal(&[e(2, 3, 0.01), e(0, 1, 0.01), e(0, 2, 0.001), e(1, 3, 0.02)], 2, 0.05);
        assert_eq!(t.edges, vec![e(0, 2, 0.001), e(0, 1, 0.01)]);
        assert_eq!(t.significant, 4);
    }

    #[test]
    fn recurrence_counts() {
        let a = vec![e(0, 1, 0.0), e(2, 3, 0.0)];
        let b = vec![e(4, 5, 0.0)];
        let r = cross_experiment_recurrence(&[a.clone(), b]).unwrap();
        assert!(r.edges.iter().all(|x| x.1 == 1));
        assert!(r.nodes.iter().all(|x| x.1 == 1));
        let r = cross_experiment_recurrence(&vec![a.clone(); 4]).unwrap();
        assert!(r.edges.iter().all(|x| x.1 == 4) && r.nodes.iter().all(|x| x.1 == 4));
        assert!(cross_experiment_recurrence(&[a]).is_err());
    }

    #[test]
    fn recurrence_overlap_by_hand() {
        // report 1: (0,1) (1,2); report 2: (1,2) (2,5)
        let r = cross_experiment_recurrence(&[
            vec![e(0, 1, 0.0), e(1, 2, 0.0)],
            vec![e(1, 2, 0.0), e(2, 5, 0.0)],
        ])
        .unwrap();
        assert_eq!(r.edges, vec![((1, 2), 2), ((0, 1), 1), ((2, 5), 1)]);
        assert_eq!(r.nodes, vec![(1, 2), (2, 2), (0, 1), (5, 1)]);
    }
}
