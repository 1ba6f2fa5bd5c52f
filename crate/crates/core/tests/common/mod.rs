#![allow(dead_code)]

pub mod gradcheck;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_adjacency(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.05..1.0));
    let mut a = (&a + a.transpose()) * 0.5;
    a.fill_diagonal(0.0);
    a
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &DMatrix<f64>, mut f: impl FnMut(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + FD_STEP;
        let up = f(&xp);
        xp[i] = orig - FD_STEP;
        let down = f(&xp);
        xp[i] = orig;
        g[i] = (up - down) / (2.0 * FD_STEP);
    }
    g
}

/// Max over entries of `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn max_rel_error(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Two-sided Student-t p-value by composite Simpson integration of the
/// density over `[0, |t|]`; shares no code with the incomplete-beta path.
pub fn t_pvalue_by_quadrature(t: f64, df: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let log_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let pdf = |x: f64| (log_c - (df + 1.0) / 2.0 * (x * x / df).ln_1p()).exp();
    let b = t.abs();
    if b == 0.0 {
        return 1.0;
    }
    let steps = 4000;
    let h = b / steps as f64;
    let mut acc = pdf(0.0) + pdf(b);
    for i in 1..steps {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(i as f64 * h);
    }
    (1.0 - 2.0 * acc * h / 3.0).clamp(0.0, 1.0)
}
