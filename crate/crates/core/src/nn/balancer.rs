//! Balancer: blends the critic's real input with the other domain.
//!
//! The real target and the other-domain matrix form a 2-channel image that
//! passes through two 3x3 same-padding convolutions (2 -> hidden -> 1, relu
//! between). The convolution output is added to the real target (skip
//! connection) and the sum is symmetrised.

use nalgebra::DMatrix;
use rand::Rng;

use super::{Activation, Param, Parameterized};
use crate::error::{Error, Result};

const K: usize = 3;
const TAPS: usize = K * K;

#[derive(Clone, Debug, PartialEq)]
pub struct Balancer {
    /// `hidden x (2 * 9)` kernel.
    pub k1: Param,
    pub b1: Param,
    /// `1 x (hidden * 9)` kernel.
    pub k2: Param,
    pub b2: Param,
}

#[derive(Clone, Debug)]
pub struct BalancerCache {
    input: Vec<DMatrix<f64>>,
    pre1: Vec<DMatrix<f64>>,
    hidden: Vec<DMatrix<f64>>,
}

#[derive(Clone, Debug)]
pub struct BalancerGrads {
    /// `[k1, b1, k2, b2]`
    pub params: Vec<DMatrix<f64>>,
    pub real_target: DMatrix<f64>,
    pub other_domain: DMatrix<f64>,
}

fn conv_forward(input: &[DMatrix<f64>], kernel: &DMatrix<f64>, bias: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let n = input[0].nrows();
    (0..kernel.nrows())
        .map(|o| {
            let mut out = DMatrix::from_element(n, n, bias[(o, 0)]);
            for (c, x) in input.iter().enumerate() {
                for t in 0..TAPS {
                    let w = kernel[(o, c * TAPS + t)];
                    if w == 0.0 {
                        continue;
                    }
                    let (di, dj) = ((t / K) as isize - 1, (t % K) as isize - 1);
                    for j in 0..n {
                        let sj = j as isize + dj;
                        if sj < 0 || sj >= n as isize {
                            continue;
                        }
                        for i in 0..n {
                            let si = i as isize + di;
                            if si < 0 || si >= n as isize {
                                continue;
                            }
                            out[(i, j)] += w * x[(si as usize, sj as usize)];
                        }
                    }
                }
            }
            out
        })
        .collect()
}

/// Returns `(grad_kernel, grad_bias, grad_input)`.
fn conv_backward(
    input: &[DMatrix<f64>],
    kernel: &DMatrix<f64>,
    grad_out: &[DMatrix<f64>],
) -> (DMatrix<f64>, DMatrix<f64>, Vec<DMatrix<f64>>) {
    let n = input[0].nrows();
    let mut gk = DMatrix::zeros(kernel.nrows(), kernel.ncols());
    let gb = DMatrix::from_fn(kernel.nrows(), 1, |o, _| grad_out[o].sum());
    let mut gin: Vec<DMatrix<f64>> = input.iter().map(|_| DMatrix::zeros(n, n)).collect();
    for (o, go) in grad_out.iter().enumerate() {
        for (c, x) in input.iter().enumerate() {
            for t in 0..TAPS {
                let w = kernel[(o, c * TAPS + t)];
                let (di, dj) = ((t / K) as isize - 1, (t % K) as isize - 1);
                let mut acc = 0.0;
                for j in 0..n {
                    let sj = j as isize + dj;
                    if sj < 0 || sj >= n as isize {
                        continue;
                    }
                    for i in 0..n {
                        let si = i as isize + di;
                        if si < 0 || si >= n as isize {
                            continue;
                        }
                        let (si, sj) = (si as usize, sj as usize);
                        acc += go[(i, j)] * x[(si, sj)];
                        gin[c][(si, sj)] += go[(i, j)] * w;
                    }
                }
                gk[(o, c * TAPS + t)] = acc;
            }
        }
    }
    (gk, gb, gin)
}

impl Balancer {
    pub fn new<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        Balancer {
            k1: Param::glorot(hidden, 2 * TAPS, 2 * TAPS, hidden * TAPS, rng),
            b1: Param::zeros(hidden, 1),
            k2: Param::glorot(1, hidden * TAPS, hidden * TAPS, TAPS, rng),
            b2: Param::zeros(1, 1),
        }
    }

    pub fn zeroed(hidden: usize) -> Self {
        Balancer {
            k1: Param::zeros(hidden, 2 * TAPS),
            b1: Param::zeros(hidden, 1),
            k2: Param::zeros(1, hidden * TAPS),
            b2: Param::zeros(1, 1),
        }
    }

    pub fn forward(&self, real_target: &DMatrix<f64>, other_domain: &DMatrix<f64>) -> Result<(DMatrix<f64>, BalancerCache)> {
        let n = real_target.nrows();
        if real_target.shape() != (n, n) || other_domain.shape() != (n, n) {
            return Err(Error::shape(
                "balancer_forward",
                format!("two {n}x{n} matrices"),
                format!("{:?} and {:?}", real_target.shape(), other_domain.shape()),
            ));
        }
        let input = vec![real_target.clone(), other_domain.clone()];
        let pre1 = conv_forward(&input, &self.k1.value, &self.b1.value);
        let hidden: Vec<DMatrix<f64>> = pre1.iter().map(|p| Activation::Relu.apply(p)).collect();
        let conv = conv_forward(&hidden, &self.k2.value, &self.b2.value).remove(0);
        let out = conv + real_target;
        let sym = (&out + out.transpose()) * 0.5;
        Ok((sym, BalancerCache { input, pre1, hidden }))
    }

    pub fn backward(&self, cache: &BalancerCache, grad_out: &DMatrix<f64>) -> Result<BalancerGrads> {
        if grad_out.shape() != cache.input[0].shape() {
            return Err(Error::StaleCache("balancer: upstream gradient shape mismatch"));
        }
        let g = (grad_out + grad_out.transpose()) * 0.5;
        let (gk2, gb2, g_hidden) = conv_backward(&cache.hidden, &self.k2.value, std::slice::from_ref(&g));
        let g_pre1: Vec<DMatrix<f64>> = g_hidden
            .iter()
            .zip(&cache.pre1)
            .map(|(gh, p)| Activation::Relu.backprop(p, gh))
            .collect();
        let (gk1, gb1, g_in) = conv_backward(&cache.input, &self.k1.value, &g_pre1);
        Ok(BalancerGrads {
            params: vec![gk1, gb1, gk2, gb2],
            real_target: &g_in[0] + g,
            other_domain: g_in[1].clone(),
        })
    }
}

impl Parameterized for Balancer {
    fn params(&self) -> Vec<&Param> {
        vec![&self.k1, &self.b1, &self.k2, &self.b2]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.k1, &mut self.b1, &mut self.k2, &mut self.b2]
    }
}
