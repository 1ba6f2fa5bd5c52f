//! Normalized Laplacian tensors and the spectral filtering basis.
//!
//! The basis is built frequency by frequency: the Laplacian tensor is moved
//! to the Fourier domain along the modality axis, each frequency slice is
//! eigendecomposed, and the eigenvector and eigenvalue tubes are carried
//! back with [`idft3`]. Frequency slices other than the DC slice (and the
//! Nyquist slice for even `r`) are complex symmetric rather than Hermitian,
//! so their eigenvector matrices are not unitary. The slice-wise inverse is
//! therefore stored explicitly and used as the inverse transform.

use std::cmp::Ordering;

use nalgebra::linalg::{Schur, SymmetricEigen};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::{dft3, idft3, to_complex, Tensor3, C64};

const SYMMETRY_TOL: f64 = 1e-9;
const SCHUR_EPS: f64 = 1e-14;
const SCHUR_MAX_ITER: usize = 10_000;

/// How an adjacency slice is turned into degrees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SliceKind {
    /// Nonnegative connection strengths, used as-is.
    Structural,
    /// Signed correlations, passed through `abs()` first.
    Functional,
}

/// Per-slice normalized Laplacians `I - D^{-1/2} A D^{-1/2}`.
#[derive(Clone, Debug)]
pub struct LaplacianTensor {
    value: Tensor3,
}

impl LaplacianTensor {
    /// Wraps an existing tensor after checking the Laplacian invariants
    /// (real, symmetric slices, spectrum inside `[0, 2]`).
    pub fn try_from_tensor(t: Tensor3) -> Result<Self> {
        let (n1, n2, r) = t.dims();
        if n1 != n2 {
            return Err(Error::shape("LaplacianTensor", "square slices", format!("{n1}x{n2}")));
        }
        if !t.is_real() {
            return Err(Error::DimensionMismatch {
                op: "LaplacianTensor",
                detail: "Laplacian tensor must be real".into(),
            });
        }
        for k in 0..r {
            let s = t.real_slice(k);
            let dev = (&s - s.transpose()).amax();
            if dev > 1e-12 {
                return Err(Error::Asymmetric { slice: k, max_dev: dev });
            }
            let eig = SymmetricEigen::new(s);
            let (lo, hi) = eig
                .eigenvalues
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
            if lo < -1e-9 || hi > 2.0 + 1e-9 {
                return Err(Error::DimensionMismatch {
                    op: "LaplacianTensor",
                    detail: format!("slice {k} spectrum [{lo}, {hi}] leaves [0, 2]"),
                });
            }
        }
        Ok(LaplacianTensor { value: t })
    }

    pub fn value(&self) -> &Tensor3 {
        &self.value
    }

    pub fn n(&self) -> usize {
        self.value.dims().0
    }
}

fn normalized_slice(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a.row(i).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut l = DMatrix::from_fn(n, n, |i, j| -inv_sqrt[i] * a[(i, j)] * inv_sqrt[j]);
    for i in 0..n {
        l[(i, i)] += 1.0;
    }
    // exact symmetry
    (&l + l.transpose()) * 0.5
}

/// Builds the normalized Laplacian of every adjacency slice. `kinds` gives
/// one [`SliceKind`] per slice. Isolated nodes get `L_ii = 1`.
pub fn normalized_laplacian(adj: &Tensor3, kinds: &[SliceKind]) -> Result<LaplacianTensor> {
    let (n, n2, r) = adj.dims();
    if n != n2 {
        return Err(Error::shape("normalized_laplacian", "square adjacency slices", format!("{n}x{n2}")));
    }
    if kinds.len() != r {
        return Err(Error::shape("normalized_laplacian", format!("{r} slice kinds"), kinds.len()));
    }
    let mut slices = Vec::with_capacity(r);
    for (k, kind) in kinds.iter().enumerate() {
        let a = adj.real_slice(k);
        let dev = (&a - a.transpose()).amax();
        if dev > SYMMETRY_TOL {
            return Err(Error::Asymmetric { slice: k, max_dev: dev });
        }
        let a = match kind {
            SliceKind::Structural => {
                if let Some((idx, &v)) = a.iter().enumerate().find(|(_, v)| **v < 0.0) {
                    return Err(Error::NegativeEntry {
                        slice: k,
                        row: idx % n,
                        col: idx / n,
                        value: v,
                    });
                }
                a
            }
            SliceKind::Functional => a.abs(),
        };
        slices.push(normalized_slice(&a));
    }
    Ok(LaplacianTensor {
        value: Tensor3::from_real_slices(&slices)?,
    })
}

/// Eigenvector/eigenvalue basis of a Laplacian tensor.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    /// Eigenvector tensor in the original domain (`N x N x r`).
    pub u: Tensor3,
    /// Eigenvalue tubes in the original domain (`N x 1 x r`).
    pub lambda: Tensor3,
    /// Eigenvector matrix per frequency, i.e. slices of `dft3(u)`.
    pub u_hat: Vec<DMatrix<C64>>,
    /// Slice-wise inverses of `u_hat`.
    pub u_inv_hat: Vec<DMatrix<C64>>,
    /// Eigenvalues per frequency, i.e. slices of `dft3(lambda)`.
    pub lambda_hat: Vec<DVector<C64>>,
    fingerprint: u64,
}

impl SpectralBasis {
    pub fn n(&self) -> usize {
        self.u.dims().0
    }

    pub fn r(&self) -> usize {
        self.u_hat.len()
    }

    /// FNV-1a hash of the eigenvector tensor, used to detect caches built
    /// against a different basis.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Rebuilds `L_hat(k) = u_hat(k) diag(lambda_hat(k)) u_inv_hat(k)` for
    /// every frequency and returns the result in the original domain.
    pub fn reconstruct(&self) -> Tensor3 {
        let slices: Vec<DMatrix<C64>> = (0..self.r())
            .map(|k| {
                let scaled = DMatrix::from_fn(self.n(), self.n(), |i, j| {
                    self.u_hat[k][(i, j)] * self.lambda_hat[k][j]
                });
                scaled * &self.u_inv_hat[k]
            })
            .collect();
        idft3(&Tensor3::from_slices(&slices).expect("uniform slices"))
    }
}

struct EigenPairs {
    values: Vec<C64>,
    vectors: DMatrix<C64>,
}

fn real_symmetric_eigen(m: &DMatrix<C64>) -> EigenPairs {
    let re = m.map(|z| z.re);
    let sym = (&re + re.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    EigenPairs {
        values: eig.eigenvalues.iter().map(|&x| C64::new(x, 0.0)).collect(),
        vectors: to_complex(&eig.eigenvectors),
    }
}

/// General complex eigendecomposition via the Schur form `m = Q T Q^H`,
/// eigenvectors of `T` by back substitution.
fn complex_eigen(m: &DMatrix<C64>, frequency: usize) -> Result<EigenPairs> {
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or(Error::EigenFailure { frequency })?;
    let (q, t) = schur.unpack();
    let tnorm = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let small = f64::EPSILON * tnorm;
    let mut y = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        let ev = t[(i, i)];
        y[(i, i)] = C64::new(1.0, 0.0);
        for j in (0..i).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for l in (j + 1)..=i {
                acc += t[(j, l)] * y[(l, i)];
            }
            let mut den = t[(j, j)] - ev;
            if den.norm() < small {
                den = C64::new(small, 0.0);
            }
            y[(j, i)] = -acc / den;
        }
    }
    let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::EigenFailure { frequency });
    }
    Ok(EigenPairs {
        values,
        vectors: q * y,
    })
}

fn argmax_abs(v: &[C64]) -> usize {
    let mut best = 0;
    let mut best_val = -1.0;
    for (i, z) in v.iter().enumerate() {
        let a = z.norm();
        if a > best_val {
            best = i;
            best_val = a;
        }
    }
    best
}

/// Sorts eigenpairs, normalises each vector to unit 2-norm and fixes its
/// phase so that the first non-negligible component is real positive.
fn canonicalize(pairs: EigenPairs) -> (DVector<C64>, DMatrix<C64>) {
    let n = pairs.values.len();
    let mut cols: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let col: Vec<C64> = pairs.vectors.column(j).iter().copied().collect();
            let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let mut col: Vec<C64> = col.into_iter().map(|z| z / norm).collect();
            if let Some(p) = col.iter().find(|z| z.norm() > 1e-12).copied() {
                let phase = p.conj() / p.norm();
                for z in &mut col {
                    *z *= phase;
                }
            }
            col
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let keys: Vec<usize> = cols.iter().map(|c| argmax_abs(c)).collect();
    order.sort_by(|&a, &b| {
        let (va, vb) = (pairs.values[a], pairs.values[b]);
        va.re
            .total_cmp(&vb.re)
            .then(va.im.total_cmp(&vb.im))
            .then(keys[a].cmp(&keys[b]))
            .then(Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| pairs.values[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = std::mem::take(&mut cols[src]);
        for (i, z) in col.into_iter().enumerate() {
            vectors[(i, dst)] = z;
        }
    }
    (values, vectors)
}

/// Computes the spectral basis `(U, Lambda)` of a Laplacian tensor.
///
/// Frequencies `k` and `r - k` are conjugate for a real Laplacian tensor,
/// so only `k <= r / 2` is decomposed and the rest are mirrored. Ordering is
/// by ascending real part of the eigenvalue, then imaginary part, then the
/// index of the eigenvector's largest-magnitude component.
pub fn spectral_basis(lap: &LaplacianTensor) -> Result<SpectralBasis> {
    let l_hat = dft3(lap.value());
    let (n, _, r) = l_hat.dims();
    let mut u_hat: Vec<Option<DMatrix<C64>>> = vec![None; r];
    let mut lambda_hat: Vec<Option<DVector<C64>>> = vec![None; r];
    for k in 0..=r / 2 {
        let slice = l_hat.slice(k);
        let pairs = if k == 0 || 2 * k == r {
            real_symmetric_eigen(&slice)
        } else {
            complex_eigen(&slice, k)?
        };
        let (vals, vecs) = canonicalize(pairs);
        let mirror = (r - k) % r;
        if mirror != k {
            u_hat[mirror] = Some(vecs.map(|z| z.conj()));
            lambda_hat[mirror] = Some(vals.map(|z| z.conj()));
        }
        u_hat[k] = Some(vecs);
        lambda_hat[k] = Some(vals);
    }
    let u_hat: Vec<DMatrix<C64>> = u_hat.into_iter().map(|m| m.expect("every frequency filled")).collect();
    let lambda_hat: Vec<DVector<C64>> = lambda_hat.into_iter().map(|m| m.expect("every frequency filled")).collect();

    let mut u_inv_hat: Vec<DMatrix<C64>> = Vec::with_capacity(r);
    for (k, m) in u_hat.iter().enumerate() {
        let mirror = (r - k) % r;
        if mirror < k {
            let inv = u_inv_hat[mirror].map(|z: C64| z.conj());
            u_inv_hat.push(inv);
            continue;
        }
        let inv = m.clone().lu().try_inverse().ok_or(Error::SingularBasis { frequency: k })?;
        if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::SingularBasis { frequency: k });
        }
        u_inv_hat.push(inv);
    }

    let u = idft3(&Tensor3::from_slices(&u_hat)?);
    let lambda_slices: Vec<DMatrix<C64>> = lambda_hat
        .iter()
        .map(|v| DMatrix::from_column_slice(n, 1, v.as_slice()))
        .collect();
    let lambda = idft3(&Tensor3::from_slices(&lambda_slices)?);
    let fingerprint = fnv1a(u.data().iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]));
    Ok(SpectralBasis {
        u,
        lambda,
        u_hat,
        u_inv_hat,
        lambda_hat,
        fingerprint,
    })
}

pub(crate) fn fnv1a(words: impl Iterator<Item = u64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
