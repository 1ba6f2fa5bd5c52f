//! Two-sample t-tests per edge.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::EdgeStat;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestKind {
    /// Unequal variances, Welch-Satterthwaite degrees of freedom.
    #[default]
    Welch,
    /// Pooled variance, `na + nb - 2` degrees of freedom.
    Pooled,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoSample {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Two-sided p-value of Student's t with `df` degrees of freedom:
/// `I_{df / (df + t^2)}(df / 2, 1 / 2)`.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(0.5 * df, 0.5, x).clamp(0.0, 1.0)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Statistic for `a` minus `b`. Both samples need at least two values.
pub fn two_sample_t(a: &[f64], b: &[f64], kind: TTestKind) -> TwoSample {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (se2, df) = match kind {
        TTestKind::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let den = qa * qa / (na - 1.0) + qb * qb / (nb - 1.0);
            let df = if den > 0.0 { se2 * se2 / den } else { na + nb - 2.0 };
            (se2, df)
        }
        TTestKind::Pooled => {
            let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
            (sp2 * (1.0 / na + 1.0 / nb), na + nb - 2.0)
        }
    };
    let diff = ma - mb;
    if se2 <= 0.0 {
        return if diff == 0.0 {
            TwoSample { t: 0.0, df, p: 1.0 }
        } else {
            TwoSample {
                t: diff.signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        };
    }
    let t = diff / se2.sqrt();
    TwoSample {
        t,
        df,
        p: t_two_sided_p(t, df),
    }
}

/// Welch test on every upper-triangular edge.
pub fn edge_ttests(group_a: &[DMatrix<f64>], group_b: &[DMatrix<f64>]) -> Result<Vec<EdgeStat>> {
    edge_ttests_with(group_a, group_b, TTestKind::Welch)
}

pub fn edge_ttests_with(group_a: &[DMatrix<f64>], group_b: &[DMatrix<f64>], kind: TTestKind) -> Result<Vec<EdgeStat>> {
    for (name, g) in [("A", group_a), ("B", group_b)] {
        if g.len() < 2 {
            return Err(Error::GroupTooSmall {
                group: name,
                size: g.len(),
            });
        }
    }
    let n = group_a[0].nrows();
    if let Some(m) = group_a.iter().chain(group_b).find(|m| m.shape() != (n, n)) {
        return Err(Error::shape("edge_ttests", format!("{n}x{n}"), format!("{:?}", m.shape())));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    Ok(pairs
        .par_iter()
        .map(|&(i, j)| {
            let a: Vec<f64> = group_a.iter().map(|m| m[(i, j)]).collect();
            let b: Vec<f64> = group_b.iter().map(|m| m[(i, j)]).collect();
            let s = two_sample_t(&a, &b, kind);
            EdgeStat {
                i,
                j,
                t_value: s.t,
                p_value: s.p,
            }
        })
        .collect())
}

/// Per-test threshold under a Bonferroni correction over `tests` tests.
pub fn bonferroni_alpha(alpha: f64, tests: usize) -> f64 {
    alpha / tests.max(1) as f64
}
