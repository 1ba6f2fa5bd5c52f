//! Differentiable layers with hand-derived gradients.
//!
//! Every layer exposes a `forward` that returns its output together with a
//! cache, and a `backward` that consumes the cache and an upstream gradient.
//! Parameter gradients are returned as plain matrices in the layer's
//! declaration order so callers can accumulate them across samples in a
//! fixed order.

mod adam;
pub mod balancer;
pub mod checkpoint;
pub mod dense;
pub mod discriminator;
pub mod gcn;
pub mod innergcn;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub use adam::{adam_step, AdamConfig};
pub use balancer::{Balancer, BalancerCache};
pub use dense::{cross_entropy, cross_entropy_grad, dense_softmax_forward, softmax, Classifier, ClassifierCache};
pub use discriminator::{Discriminator, DiscriminatorCache};
pub use gcn::{gcn_backward, gcn_forward, normalize_with_self_loops, GcnCache, GcnGrads};
pub use innergcn::{innergcn_backward, innergcn_forward, InnerGcnCache};

/// A learnable buffer with its gradient and Adam moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: DMatrix<f64>,
    pub grad: DMatrix<f64>,
    pub adam_m: DMatrix<f64>,
    pub adam_v: DMatrix<f64>,
    pub step_count: u64,
}

impl Param {
    pub fn new(value: DMatrix<f64>) -> Self {
        let (r, c) = value.shape();
        Param {
            value,
            grad: DMatrix::zeros(r, c),
            adam_m: DMatrix::zeros(r, c),
            adam_v: DMatrix::zeros(r, c),
            step_count: 0,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param::new(DMatrix::zeros(rows, cols))
    }

    /// Glorot-uniform initialisation with the given fan-in and fan-out.
    pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Param::new(DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit)))
    }

    /// `scale * N(0, 1)` entries.
    pub fn normal<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        Param::new(DMatrix::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        }))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, z: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Relu => z.map(|x| x.max(0.0)),
            Activation::Identity => z.clone(),
        }
    }

    /// Multiplies `grad` by the activation derivative at pre-activation `z`.
    pub fn backprop(self, z: &DMatrix<f64>, grad: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Relu => grad.zip_map(z, |g, x| if x > 0.0 { g } else { 0.0 }),
            Activation::Identity => grad.clone(),
        }
    }
}

/// Mutable access to a module's parameters in declaration order.
pub trait Parameterized {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grads(&self) -> Vec<DMatrix<f64>> {
        self.params()
            .iter()
            .map(|p| DMatrix::zeros(p.value.nrows(), p.value.ncols()))
            .collect()
    }
}
