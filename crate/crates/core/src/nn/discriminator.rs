//! Graph critic: two GCN layers, mean pool over nodes, dense to a raw score.

use nalgebra::DMatrix;
use rand::Rng;

use super::gcn::{gcn_backward, gcn_forward, GcnCache};
use super::{Activation, Param, Parameterized};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub w1: Param,
    pub w2: Param,
    pub w_out: Param,
    pub b_out: Param,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorCache {
    l1: GcnCache,
    l2: GcnCache,
    pooled: DMatrix<f64>,
    n: usize,
    pub score: f64,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorGrads {
    /// `[w1, w2, w_out, b_out]`
    pub params: Vec<DMatrix<f64>>,
    pub adj: DMatrix<f64>,
    pub feats: DMatrix<f64>,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(feat_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Discriminator {
            w1: Param::glorot(feat_dim, hidden, feat_dim, hidden, rng),
            w2: Param::glorot(hidden, hidden, hidden, hidden, rng),
            w_out: Param::glorot(hidden, 1, hidden, 1, rng),
            b_out: Param::zeros(1, 1),
        }
    }

    pub fn zeroed(feat_dim: usize, hidden: usize) -> Self {
        Discriminator {
            w1: Param::zeros(feat_dim, hidden),
            w2: Param::zeros(hidden, hidden),
            w_out: Param::zeros(hidden, 1),
            b_out: Param::zeros(1, 1),
        }
    }

    pub fn forward(&self, adj: &DMatrix<f64>, feats: &DMatrix<f64>) -> Result<DiscriminatorCache> {
        if feats.ncols() != self.w1.value.nrows() {
            return Err(Error::shape("discriminator", format!("{} feature columns", self.w1.value.nrows()), feats.ncols()));
        }
        let (h1, l1) = gcn_forward(feats, adj, &self.w1.value, Activation::Relu)?;
        let (h2, l2) = gcn_forward(&h1, adj, &self.w2.value, Activation::Relu)?;
        let n = h2.nrows();
        let pooled = DMatrix::from_row_slice(1, h2.ncols(), (h2.row_sum() / n as f64).as_slice());
        let score = (&pooled * &self.w_out.value)[(0, 0)] + self.b_out.value[(0, 0)];
        Ok(DiscriminatorCache { l1, l2, pooled, n, score })
    }

    pub fn score(&self, adj: &DMatrix<f64>, feats: &DMatrix<f64>) -> Result<f64> {
        Ok(self.forward(adj, feats)?.score)
    }

    /// Gradients of `upstream * score`.
    pub fn backward(&self, cache: &DiscriminatorCache, upstream: f64) -> Result<DiscriminatorGrads> {
        let g_wout = cache.pooled.transpose() * upstream;
        let g_bout = DMatrix::from_element(1, 1, upstream);
        let g_pooled = self.w_out.value.transpose() * upstream;
        let hidden = g_pooled.ncols();
        let g_h2 = DMatrix::from_fn(cache.n, hidden, |_, j| g_pooled[(0, j)] / cache.n as f64);
        let g2 = gcn_backward(&cache.l2, &self.w2.value, &g_h2)?;
        let g1 = gcn_backward(&cache.l1, &self.w1.value, &g2.x)?;
        Ok(DiscriminatorGrads {
            params: vec![g1.w, g2.w, g_wout, g_bout],
            adj: g1.adj + g2.adj,
            feats: g1.x,
        })
    }
}

impl Parameterized for Discriminator {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w1, &self.w2, &self.w_out, &self.b_out]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w1, &mut self.w2, &mut self.w_out, &mut self.b_out]
    }
}

/// Graph view of a connectivity matrix for the critic: `|M|` off the
/// diagonal as adjacency, the rows of `M` as node features.
pub fn matrix_graph(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = m.abs();
    a.fill_diagonal(0.0);
    a
}

/// Scores a connectivity matrix through [`matrix_graph`].
pub fn score_matrix(d: &Discriminator, m: &DMatrix<f64>) -> Result<DiscriminatorCache> {
    d.forward(&matrix_graph(m), m)
}

/// Derivative of `abs`, zero at zero.
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Folds adjacency and feature gradients of [`score_matrix`] back onto `m`.
pub fn matrix_grad(m: &DMatrix<f64>, grads: &DiscriminatorGrads) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let via_adj = if i == j { 0.0 } else { sign(m[(i, j)]) * grads.adj[(i, j)] };
        grads.feats[(i, j)] + via_adj
    })
}
