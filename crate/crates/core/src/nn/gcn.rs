//! Graph convolution `act(D^{-1/2} (A + I) D^{-1/2} X W)`.

use nalgebra::DMatrix;

use super::Activation;
use crate::error::{Error, Result};

/// Symmetric normalisation of `adj + I`. Returns the normalised matrix and
/// the per-node `d^{-1/2}` factors.
pub fn normalize_with_self_loops(adj: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = adj.nrows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d = adj.row(i).sum() + 1.0;
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let norm = DMatrix::from_fn(n, n, |i, j| {
        let a = adj[(i, j)] + if i == j { 1.0 } else { 0.0 };
        inv_sqrt[i] * a * inv_sqrt[j]
    });
    (norm, inv_sqrt)
}

#[derive(Clone, Debug)]
pub struct GcnCache {
    adj_hat: DMatrix<f64>,
    norm: DMatrix<f64>,
    inv_sqrt: Vec<f64>,
    x: DMatrix<f64>,
    xw: DMatrix<f64>,
    pre: DMatrix<f64>,
    act: Activation,
}

impl GcnCache {
    pub fn pre_activation(&self) -> &DMatrix<f64> {
        &self.pre
    }
}

#[derive(Clone, Debug)]
pub struct GcnGrads {
    pub x: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub adj: DMatrix<f64>,
}

pub fn gcn_forward(
    x: &DMatrix<f64>,
    adj: &DMatrix<f64>,
    w: &DMatrix<f64>,
    act: Activation,
) -> Result<(DMatrix<f64>, GcnCache)> {
    let n = adj.nrows();
    if adj.ncols() != n || x.nrows() != n {
        return Err(Error::shape(
            "gcn_forward",
            format!("{n}x{n} adjacency and {n} feature rows"),
            format!("{}x{} adjacency, {} feature rows", adj.nrows(), adj.ncols(), x.nrows()),
        ));
    }
    if x.ncols() != w.nrows() {
        return Err(Error::shape("gcn_forward", format!("weight with {} rows", x.ncols()), w.nrows()));
    }
    let (norm, inv_sqrt) = normalize_with_self_loops(adj);
    let xw = x * w;
    let pre = &norm * &xw;
    let out = act.apply(&pre);
    let adj_hat = adj + DMatrix::identity(n, n);
    Ok((
        out,
        GcnCache {
            adj_hat,
            norm,
            inv_sqrt,
            x: x.clone(),
            xw,
            pre,
            act,
        },
    ))
}

/// Gradients of a scalar loss with respect to the features, the weight and
/// every adjacency entry (entries treated as independent).
pub fn gcn_backward(cache: &GcnCache, w: &DMatrix<f64>, grad_out: &DMatrix<f64>) -> Result<GcnGrads> {
    if grad_out.shape() != cache.pre.shape() {
        return Err(Error::StaleCache("gcn: upstream gradient shape differs from cached output"));
    }
    let n = cache.norm.nrows();
    let g_pre = cache.act.backprop(&cache.pre, grad_out);
    let gw = (&cache.norm * &cache.x).transpose() * &g_pre;
    let g_xw = cache.norm.transpose() * &g_pre;
    let gx = &g_xw * w.transpose();

    // pre = S A_hat S (XW) with S = diag(d^{-1/2}), d_i = sum_j A_hat_ij
    let g_norm = &g_pre * cache.xw.transpose();
    let s = &cache.inv_sqrt;
    let mut g_s = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let gn = g_norm[(i, j)] * cache.adj_hat[(i, j)];
            g_s[i] += gn * s[j];
            g_s[j] += gn * s[i];
        }
    }
    // ds/dd = -1/2 d^{-3/2} = -1/2 s^3
    let g_d: Vec<f64> = (0..n).map(|i| -0.5 * s[i] * s[i] * s[i] * g_s[i]).collect();
    let gadj = DMatrix::from_fn(n, n, |i, j| g_norm[(i, j)] * s[i] * s[j] + g_d[i]);
    Ok(GcnGrads { x: gx, w: gw, adj: gadj })
}
