//! Tensor spectral filter `x * g = U^{-1} ⋄ ((U ⋄ x) ⊙ (U ⋄ g))`.
//!
//! `U ⋄ (.)` is the t-product with the eigenvector tensor, evaluated as a
//! per-frequency left multiplication by `u_hat(k)`. The Hadamard product is
//! taken in the original (modality) domain. The outer transform uses the
//! slice-wise inverse `u_inv_hat(k)`; for Hermitian frequency slices this is
//! the conjugate t-transpose.
//!
//! The layer is bilinear in `(x, g)`, so its gradients are the adjoint
//! transforms (conjugate-transposed frequency slices) applied to the
//! upstream gradient.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::SpectralBasis;
use crate::tensor::{dft3, fmt_dims, idft3, Tensor3, C64};

const IMAG_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct InnerGcnCache {
    p: Tensor3,
    q: Tensor3,
    fingerprint: u64,
}

/// Applies `mats[k]` to frequency slice `k` of `x` and transforms back.
/// The result is real whenever `x` is real and `mats` is conjugate-symmetric
/// across frequencies.
pub(crate) fn apply_per_frequency(mats: &[DMatrix<C64>], x: &Tensor3) -> Tensor3 {
    let x_hat = dft3(x);
    let slices: Vec<DMatrix<C64>> = mats
        .iter()
        .enumerate()
        .map(|(k, m)| m * x_hat.slice(k))
        .collect();
    let out = idft3(&Tensor3::from_slices(&slices).expect("uniform slices"));
    realify(out)
}

fn realify(t: Tensor3) -> Tensor3 {
    if t.is_real() || t.max_imag() < IMAG_TOL * t.max_abs().max(1.0) {
        t.into_real()
    } else {
        t
    }
}

fn adjoints(mats: &[DMatrix<C64>]) -> Vec<DMatrix<C64>> {
    mats.iter().map(|m| m.adjoint()).collect()
}

fn check(x: &Tensor3, g: &Tensor3, basis: &SpectralBasis) -> Result<()> {
    let (n, _, r) = x.dims();
    if x.dims() != g.dims() {
        return Err(Error::shape("innergcn_forward", fmt_dims(x.dims()), fmt_dims(g.dims())));
    }
    if n != basis.n() || r != basis.r() {
        return Err(Error::shape(
            "innergcn_forward",
            format!("{} nodes and {} slices (basis)", basis.n(), basis.r()),
            fmt_dims(x.dims()),
        ));
    }
    Ok(())
}

/// Spectral transform `U ⋄ x`.
pub fn spectral_transform(basis: &SpectralBasis, x: &Tensor3) -> Tensor3 {
    apply_per_frequency(&basis.u_hat, x)
}

/// Inverse spectral transform `U^{-1} ⋄ x`.
pub fn inverse_spectral_transform(basis: &SpectralBasis, x: &Tensor3) -> Tensor3 {
    apply_per_frequency(&basis.u_inv_hat, x)
}

pub fn innergcn_forward(x: &Tensor3, g: &Tensor3, basis: &SpectralBasis) -> Result<(Tensor3, InnerGcnCache)> {
    check(x, g, basis)?;
    let p = spectral_transform(basis, x);
    let q = spectral_transform(basis, g);
    let h = p.hadamard(&q)?;
    let y = inverse_spectral_transform(basis, &h);
    Ok((
        y,
        InnerGcnCache {
            p,
            q,
            fingerprint: basis.fingerprint(),
        },
    ))
}

/// Returns `(grad_x, grad_g)`.
pub fn innergcn_backward(
    cache: &InnerGcnCache,
    basis: &SpectralBasis,
    grad_out: &Tensor3,
) -> Result<(Tensor3, Tensor3)> {
    if cache.fingerprint != basis.fingerprint() {
        return Err(Error::StaleCache("innergcn: cache was built against a different basis"));
    }
    if grad_out.dims() != cache.p.dims() {
        return Err(Error::StaleCache("innergcn: upstream gradient shape differs from cached output"));
    }
    let g_h = apply_per_frequency(&adjoints(&basis.u_inv_hat), grad_out);
    let g_p = g_h.hadamard(&cache.q)?;
    let g_q = g_h.hadamard(&cache.p)?;
    let u_adj = adjoints(&basis.u_hat);
    Ok((apply_per_frequency(&u_adj, &g_p), apply_per_frequency(&u_adj, &g_q)))
}

/// Kernel whose spectral image `U ⋄ g` equals `target`.
pub fn kernel_for_spectral(basis: &SpectralBasis, target: &Tensor3) -> Tensor3 {
    inverse_spectral_transform(basis, target)
}

/// Packs an `n x d x r` tensor into an `n x (d r)` matrix, slice `k`
/// occupying columns `k d .. (k + 1) d`.
pub fn tensor_to_matrix(t: &Tensor3) -> DMatrix<f64> {
    let (n, d, r) = t.dims();
    DMatrix::from_fn(n, d * r, |i, c| t.get(i, c % d, c / d).re)
}

pub fn matrix_to_tensor(m: &DMatrix<f64>, r: usize) -> Tensor3 {
    let (n, dr) = m.shape();
    let d = dr / r;
    Tensor3::from_fn(n, d, r, |i, j, k| m[(i, k * d + j)])
}
