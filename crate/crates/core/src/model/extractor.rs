//! Feature extractor: GCN-in, a residual stack of InnerGCN layers, GCN-out.
//!
//! GCN-in maps every modality slice of the `n x d x r` feature tensor
//! through one shared weight on the source-domain adjacency. Each slice is
//! augmented with an `n x n` identity block, so the lower rows of `w_in`
//! act as learned per-region embeddings; regions correspond across
//! subjects, and without them nodes with similar row statistics would be
//! indistinguishable. Each InnerGCN
//! layer computes `relu(y + innergcn(y, g_l))` against the subject's
//! spectral basis. GCN-out reads the concatenated slices (`n x h r`) and
//! emits a signed latent `n x d'`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::innergcn::{matrix_to_tensor, tensor_to_matrix};
use crate::nn::{gcn_backward, gcn_forward, innergcn_backward, innergcn_forward, Activation, GcnCache, InnerGcnCache};
use crate::nn::{Param, Parameterized};
use crate::spectral::SpectralBasis;
use crate::tensor::Tensor3;

const KERNEL_SCALE: f64 = 0.01;
// region embeddings start at unit scale so that graph smoothing of them
// already separates communities in the latent
const EMBED_SCALE: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Extractor {
    /// `(d + n) x h`, shared across modality slices; rows `d..` are the
    /// region embeddings.
    pub w_in: Param,
    /// One `n x (h r)` kernel per InnerGCN layer.
    pub kernels: Vec<Param>,
    /// `(h r) x d'`.
    pub w_out: Param,
    r: usize,
}

#[derive(Clone, Debug)]
pub struct ExtractorCache {
    gcn_in: Vec<GcnCache>,
    inner: Vec<(InnerGcnCache, Tensor3)>,
    gcn_out: GcnCache,
}

/// `[x | I]`
fn augment(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    DMatrix::from_fn(n, d + n, |i, j| {
        if j < d {
            x[(i, j)]
        } else if j - d == i {
            1.0
        } else {
            0.0
        }
    })
}

impl Extractor {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        n: usize,
        d: usize,
        r: usize,
        hidden: usize,
        layers: usize,
        latent: usize,
        rng: &mut R,
    ) -> Self {
        Extractor {
            w_in: {
                let feat = Param::glorot(d, hidden, d, hidden, rng).value;
                let embed = Param::normal(n, hidden, EMBED_SCALE, rng).value;
                Param::new(DMatrix::from_fn(d + n, hidden, |i, j| if i < d { feat[(i, j)] } else { embed[(i - d, j)] }))
            },
            kernels: (0..layers).map(|_| Param::normal(n, hidden * r, KERNEL_SCALE, rng)).collect(),
            w_out: Param::glorot(hidden * r, latent, hidden * r, latent, rng),
            r,
        }
    }

    pub fn zeroed(n: usize, d: usize, r: usize, hidden: usize, layers: usize, latent: usize) -> Self {
        Extractor {
            w_in: Param::zeros(d + n, hidden),
            kernels: (0..layers).map(|_| Param::zeros(n, hidden * r)).collect(),
            w_out: Param::zeros(hidden * r, latent),
            r,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.w_out.value.ncols()
    }

    pub fn forward(&self, x: &Tensor3, adj: &DMatrix<f64>, basis: &SpectralBasis) -> Result<(DMatrix<f64>, ExtractorCache)> {
        let (n, d, r) = x.dims();
        if r != self.r || d + n != self.w_in.value.nrows() {
            return Err(Error::shape(
                "extractor",
                format!("n x d x {} with n + d = {}", self.r, self.w_in.value.nrows()),
                format!("{n} x {d} x {r}"),
            ));
        }
        let mut slices = Vec::with_capacity(r);
        let mut gcn_in = Vec::with_capacity(r);
        for k in 0..r {
            let (h, c) = gcn_forward(&augment(&x.real_slice(k)), adj, &self.w_in.value, Activation::Relu)?;
            slices.push(h);
            gcn_in.push(c);
        }
        let mut y = Tensor3::from_real_slices(&slices)?;
        let mut inner = Vec::with_capacity(self.kernels.len());
        for g in &self.kernels {
            let (z, c) = innergcn_forward(&y, &matrix_to_tensor(&g.value, r), basis)?;
            let pre = (&y + &z).into_real();
            y = pre.map(|v| v.re.max(0.0).into()).into_real();
            inner.push((c, pre));
        }
        let (latent, gcn_out) = gcn_forward(&tensor_to_matrix(&y), adj, &self.w_out.value, Activation::Identity)?;
        Ok((latent, ExtractorCache { gcn_in, inner, gcn_out }))
    }

    /// Returns parameter gradients in [`Parameterized`] order and the
    /// gradient with respect to the adjacency.
    pub fn backward(
        &self,
        cache: &ExtractorCache,
        basis: &SpectralBasis,
        g_latent: &DMatrix<f64>,
    ) -> Result<(Vec<DMatrix<f64>>, DMatrix<f64>)> {
        let r = self.r;
        let out = gcn_backward(&cache.gcn_out, &self.w_out.value, g_latent)?;
        let mut adj = out.adj;
        let mut g_y = matrix_to_tensor(&out.x, r);
        let mut g_kernels = vec![DMatrix::zeros(0, 0); self.kernels.len()];
        for (l, (c, pre)) in cache.inner.iter().enumerate().rev() {
            let g_pre = Tensor3::from_fn(pre.dims().0, pre.dims().1, r, |i, j, k| {
                if pre.get(i, j, k).re > 0.0 {
                    g_y.get(i, j, k).re
                } else {
                    0.0
                }
            });
            let (gx, gg) = innergcn_backward(c, basis, &g_pre)?;
            g_kernels[l] = tensor_to_matrix(&gg);
            g_y = (&g_pre + &gx).into_real();
        }
        let mut g_win = DMatrix::zeros(self.w_in.value.nrows(), self.w_in.value.ncols());
        for (k, c) in cache.gcn_in.iter().enumerate() {
            let g = gcn_backward(c, &self.w_in.value, &g_y.real_slice(k))?;
            g_win += g.w;
            adj += g.adj;
        }
        let mut grads = Vec::with_capacity(self.kernels.len() + 2);
        grads.push(g_win);
        grads.extend(g_kernels);
        grads.push(out.w);
        Ok((grads, adj))
    }
}

impl Parameterized for Extractor {
    fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.w_in];
        v.extend(self.kernels.iter());
        v.push(&self.w_out);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.w_in];
        v.extend(self.kernels.iter_mut());
        v.push(&mut self.w_out);
        v
    }
}
