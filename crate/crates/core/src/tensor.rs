//! Third-order tensors and the t-product algebra.
//!
//! A [`Tensor3`] of dimensions `n1 x n2 x r` is a stack of `r` frontal
//! slices, each an `n1 x n2` matrix. The third axis indexes modality (or,
//! after [`dft3`], frequency). The t-product multiplies two tensors as
//! block-circulant matrices, which the Fourier transform along the third
//! axis diagonalises into `r` independent slice products.
//!
//! Storage is always complex; a tensor carries a `real` flag that is set
//! only when every imaginary component is exactly zero.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Dense third-order tensor, slice axis last.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    n1: usize,
    n2: usize,
    r: usize,
    // slice-major, each slice column-major (same layout as `DMatrix`)
    data: Vec<C64>,
    real: bool,
}

impl Tensor3 {
    pub fn zeros(n1: usize, n2: usize, r: usize) -> Self {
        assert!(n1 > 0 && n2 > 0 && r > 0, "tensor dimensions must be positive");
        Tensor3 {
            n1,
            n2,
            r,
            data: vec![C64::new(0.0, 0.0); n1 * n2 * r],
            real: true,
        }
    }

    /// The t-product identity: identity matrix in slice 0, zeros elsewhere.
    pub fn identity(n: usize, r: usize) -> Self {
        let mut t = Tensor3::zeros(n, n, r);
        for i in 0..n {
            t.set(i, i, 0, C64::new(1.0, 0.0));
        }
        t
    }

    pub fn from_slices(slices: &[DMatrix<C64>]) -> Result<Self> {
        let first = slices.first().ok_or_else(|| Error::DimensionMismatch {
            op: "Tensor3::from_slices",
            detail: "no slices given".into(),
        })?;
        let (n1, n2) = first.shape();
        if n1 == 0 || n2 == 0 {
            return Err(Error::shape("Tensor3::from_slices", "non-empty slices", "0-sized slice"));
        }
        let mut data = Vec::with_capacity(n1 * n2 * slices.len());
        for s in slices {
            if s.shape() != (n1, n2) {
                return Err(Error::shape("Tensor3::from_slices", format!("{n1}x{n2}"), format!("{}x{}", s.nrows(), s.ncols())));
            }
            data.extend_from_slice(s.as_slice());
        }
        let real = data.iter().all(|z| z.im == 0.0);
        Ok(Tensor3 {
            n1,
            n2,
            r: slices.len(),
            data,
            real,
        })
    }

    pub fn from_real_slices(slices: &[DMatrix<f64>]) -> Result<Self> {
        let complex: Vec<DMatrix<C64>> = slices.iter().map(to_complex).collect();
        Tensor3::from_slices(&complex)
    }

    /// Builds a real tensor from a closure over `(row, col, slice)`.
    pub fn from_fn(n1: usize, n2: usize, r: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor3::zeros(n1, n2, r);
        for k in 0..r {
            for j in 0..n2 {
                for i in 0..n1 {
                    t.data[k * n1 * n2 + j * n1 + i] = C64::new(f(i, j, k), 0.0);
                }
            }
        }
        t
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n1, self.n2, self.r)
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.n1 && j < self.n2 && k < self.r);
        k * self.n1 * self.n2 + j * self.n1 + i
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> C64 {
        self.data[self.idx(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: C64) {
        let at = self.idx(i, j, k);
        self.data[at] = v;
        if v.im != 0.0 {
            self.real = false;
        }
    }

    pub fn slice(&self, k: usize) -> DMatrix<C64> {
        let len = self.n1 * self.n2;
        DMatrix::from_column_slice(self.n1, self.n2, &self.data[k * len..(k + 1) * len])
    }

    /// Real part of slice `k`.
    pub fn real_slice(&self, k: usize) -> DMatrix<f64> {
        self.slice(k).map(|z| z.re)
    }

    pub fn slices(&self) -> Vec<DMatrix<C64>> {
        (0..self.r).map(|k| self.slice(k)).collect()
    }

    pub fn real_slices(&self) -> Vec<DMatrix<f64>> {
        (0..self.r).map(|k| self.real_slice(k)).collect()
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// Drops imaginary parts and flags the tensor real.
    pub fn into_real(mut self) -> Tensor3 {
        for z in &mut self.data {
            z.im = 0.0;
        }
        self.real = true;
        self
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Tensor3 {
        let data: Vec<C64> = self.data.iter().map(|&z| f(z)).collect();
        let real = data.iter().all(|z| z.im == 0.0);
        Tensor3 { data, real, ..*self }
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.dims() != other.dims() {
            return Err(Error::shape("hadamard", fmt_dims(self.dims()), fmt_dims(other.dims())));
        }
        let data: Vec<C64> = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        let real = data.iter().all(|z| z.im == 0.0);
        Ok(Tensor3 { data, real, ..*self })
    }

    /// True when slice `k` equals the conjugate of slice `(r - k) mod r`
    /// within `tol`, for every `k`.
    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        let len = self.n1 * self.n2;
        (0..self.r).all(|k| {
            let m = (self.r - k) % self.r;
            (0..len).all(|e| (self.data[k * len + e] - self.data[m * len + e].conj()).norm() <= tol)
        })
    }
}

impl std::ops::Add for &Tensor3 {
    type Output = Tensor3;

    fn add(self, rhs: &Tensor3) -> Tensor3 {
        assert_eq!(self.dims(), rhs.dims(), "tensor add: dimension mismatch");
        let data: Vec<C64> = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        let real = self.real && rhs.real;
        Tensor3 { data, real, ..*self }
    }
}

pub(crate) fn fmt_dims((a, b, c): (usize, usize, usize)) -> String {
    format!("{a}x{b}x{c}")
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Twiddle factors `w^p` for `p in 0..r`, `w = exp(sign * 2 pi i / r)`.
fn twiddles(r: usize, sign: f64) -> Vec<C64> {
    (0..r)
        .map(|p| C64::from_polar(1.0, sign * 2.0 * PI * p as f64 / r as f64))
        .collect()
}

fn transform(t: &Tensor3, sign: f64, scale: f64) -> Tensor3 {
    let (n1, n2, r) = t.dims();
    let len = n1 * n2;
    let w = twiddles(r, sign);
    let mut out = vec![C64::new(0.0, 0.0); len * r];
    for k in 0..r {
        let dst = &mut out[k * len..(k + 1) * len];
        for j in 0..r {
            let f = w[(j * k) % r] * scale;
            let src = &t.data[j * len..(j + 1) * len];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * f;
            }
        }
    }
    let real = out.iter().all(|z| z.im == 0.0);
    Tensor3 {
        n1,
        n2,
        r,
        data: out,
        real,
    }
}

/// Unnormalised DFT along the slice axis: `out_k = sum_j t_j w^{jk}`,
/// `w = exp(-2 pi i / r)`.
pub fn dft3(t: &Tensor3) -> Tensor3 {
    if t.r == 1 {
        return t.clone();
    }
    let mut out = transform(t, -1.0, 1.0);
    // Mirror slices are computed independently; pin exact symmetry for
    // real input so downstream real-ness checks are reliable.
    if t.real {
        let len = t.n1 * t.n2;
        for k in 1..t.r {
            let m = t.r - k;
            if m < k {
                for e in 0..len {
                    out.data[k * len + e] = out.data[m * len + e].conj();
                }
            } else if m == k {
                for e in 0..len {
                    out.data[k * len + e].im = 0.0;
                }
            }
        }
        for e in 0..len {
            out.data[e].im = 0.0;
        }
        out.real = out.data.iter().all(|z| z.im == 0.0);
    }
    out
}

/// Inverse of [`dft3`] (divides by `r`). Output is flagged real when the
/// input slices are conjugate-symmetric.
pub fn idft3(t: &Tensor3) -> Tensor3 {
    if t.r == 1 {
        return t.clone();
    }
    let sym_tol = 1e-10 * t.max_abs().max(1.0);
    let symmetric = t.is_conjugate_symmetric(sym_tol);
    let out = transform(t, 1.0, 1.0 / t.r as f64);
    if symmetric {
        out.into_real()
    } else {
        out
    }
}

/// Stacks the slices vertically: `[A_0; A_1; ...; A_{r-1}]`.
pub fn fold1(a: &Tensor3) -> DMatrix<C64> {
    let (n1, n2, r) = a.dims();
    let mut m = DMatrix::zeros(n1 * r, n2);
    for k in 0..r {
        m.view_mut((k * n1, 0), (n1, n2)).copy_from(&a.slice(k));
    }
    m
}

/// Block-circulant matrix whose block `(i, j)` is slice `(i - j) mod r`.
pub fn fold2(b: &Tensor3) -> DMatrix<C64> {
    let (n1, n2, r) = b.dims();
    let slices = b.slices();
    let mut m = DMatrix::zeros(n1 * r, n2 * r);
    for bi in 0..r {
        for bj in 0..r {
            let k = (bi + r - bj) % r;
            m.view_mut((bi * n1, bj * n2), (n1, n2)).copy_from(&slices[k]);
        }
    }
    m
}

/// Reads the first block column of a block matrix back into a tensor of
/// dimensions `dims`. Accepts either a block column (`n1 r x n2`) or a full
/// block matrix (`n1 r x n2 r`).
pub fn unfold(m: &DMatrix<C64>, dims: (usize, usize, usize)) -> Result<Tensor3> {
    let (n1, n2, r) = dims;
    let (rows, cols) = m.shape();
    if n1 == 0 || n2 == 0 || r == 0 || rows != n1 * r || (cols != n2 && cols != n2 * r) {
        return Err(Error::DimensionMismatch {
            op: "unfold",
            detail: format!("{rows}x{cols} matrix cannot be split into {r} blocks of {n1}x{n2}"),
        });
    }
    let slices: Vec<DMatrix<C64>> = (0..r)
        .map(|k| m.view((k * n1, 0), (n1, n2)).into_owned())
        .collect();
    Tensor3::from_slices(&slices)
}

fn check_tprod(a: &Tensor3, b: &Tensor3) -> Result<()> {
    let (_, a2, ar) = a.dims();
    let (b1, _, br) = b.dims();
    if a2 != b1 || ar != br {
        return Err(Error::shape(
            "tprod",
            format!("inner dimension {a2} and {ar} slices"),
            format!("{}", fmt_dims(b.dims())),
        ));
    }
    Ok(())
}

/// Slice-wise product of two tensors already in the Fourier domain.
pub fn facewise_product(a_hat: &Tensor3, b_hat: &Tensor3) -> Result<Tensor3> {
    check_tprod(a_hat, b_hat)?;
    let prods: Vec<DMatrix<C64>> = (0..a_hat.r)
        .map(|k| a_hat.slice(k) * b_hat.slice(k))
        .collect();
    Tensor3::from_slices(&prods)
}

/// The t-product `a ⋄ b`, computed slice-wise in the Fourier domain.
pub fn tprod(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    check_tprod(a, b)?;
    let out = idft3(&facewise_product(&dft3(a), &dft3(b))?);
    Ok(if a.real && b.real { out.into_real() } else { out })
}

/// The t-product evaluated literally as a block-circulant matrix product in
/// the original domain. Quadratically more expensive than [`tprod`].
pub fn tprod_block(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    check_tprod(a, b)?;
    let (n1, _, r) = a.dims();
    let (_, n3, _) = b.dims();
    unfold(&(fold2(a) * fold1(b)), (n1, n3, r))
}

/// Conjugate t-transpose: slice 0 is conjugate-transposed in place, slices
/// `1..r` are conjugate-transposed and their order reversed.
pub fn ttranspose(a: &Tensor3) -> Tensor3 {
    let (_, _, r) = a.dims();
    let slices: Vec<DMatrix<C64>> = (0..r)
        .map(|k| a.slice((r - k) % r).adjoint())
        .collect();
    let mut out = Tensor3::from_slices(&slices).expect("slices share a shape");
    out.real = a.real;
    out
}
