//! Dense layers, softmax cross-entropy and the classifier head.

use nalgebra::DMatrix;
use rand::Rng;

use super::{Activation, Param, Parameterized};
use crate::error::{Error, Result};

const PROB_FLOOR: f64 = 1e-12;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `softmax(features . w + b)` for a single row of features.
pub fn dense_softmax_forward(features: &DMatrix<f64>, w: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    if features.nrows() != 1 || features.ncols() != w.nrows() || b.shape() != (1, w.ncols()) {
        return Err(Error::shape(
            "dense_softmax_forward",
            format!("1x{} features, 1x{} bias", w.nrows(), w.ncols()),
            format!("{}x{} features, {}x{} bias", features.nrows(), features.ncols(), b.nrows(), b.ncols()),
        ));
    }
    let logits = features * w + b;
    Ok(softmax(logits.as_slice()))
}

/// `-ln p[label]`, with probabilities clamped below at `1e-12`.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs.get(label).ok_or(Error::LabelOutOfRange {
        label,
        classes: probs.len(),
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Gradient of [`cross_entropy`] of a softmax with respect to the logits.
pub fn cross_entropy_grad(probs: &[f64], label: usize) -> Result<Vec<f64>> {
    if label >= probs.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: probs.len(),
        });
    }
    let mut g = probs.to_vec();
    // inside the clamp the loss is flat
    if probs[label] > PROB_FLOOR {
        g[label] -= 1.0;
    } else {
        g.iter_mut().for_each(|x| *x = 0.0);
    }
    Ok(g)
}

/// Flattened latent -> dense(hidden) -> relu -> dropout -> dense(classes)
/// -> softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub w1: Param,
    pub b1: Param,
    pub w2: Param,
    pub b2: Param,
}

#[derive(Clone, Debug)]
pub struct ClassifierCache {
    input: DMatrix<f64>,
    pre1: DMatrix<f64>,
    hidden: DMatrix<f64>,
    mask: Option<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl Classifier {
    pub fn new<R: Rng + ?Sized>(n_in: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        Classifier {
            w1: Param::glorot(n_in, hidden, n_in, hidden, rng),
            b1: Param::zeros(1, hidden),
            w2: Param::glorot(hidden, classes, hidden, classes, rng),
            b2: Param::zeros(1, classes),
        }
    }

    pub fn n_in(&self) -> usize {
        self.w1.value.nrows()
    }

    pub fn classes(&self) -> usize {
        self.w2.value.ncols()
    }

    /// Row-major flattening of a node-feature matrix.
    pub fn flatten(latent: &DMatrix<f64>) -> DMatrix<f64> {
        let t = latent.transpose();
        DMatrix::from_row_slice(1, latent.len(), t.as_slice())
    }

    /// `dropout` is `Some((rate, rng))` during training and `None` at
    /// inference.
    pub fn forward<R: Rng + ?Sized>(&self, latent: &DMatrix<f64>, dropout: Option<(f64, &mut R)>) -> Result<ClassifierCache> {
        let input = Classifier::flatten(latent);
        if input.ncols() != self.n_in() {
            return Err(Error::shape("classifier", self.n_in(), input.ncols()));
        }
        let pre1 = &input * &self.w1.value + &self.b1.value;
        let mut hidden = Activation::Relu.apply(&pre1);
        let mask = dropout.map(|(rate, rng)| {
            let keep = 1.0 - rate;
            let m: Vec<f64> = (0..hidden.len())
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            for (h, k) in hidden.iter_mut().zip(&m) {
                *h *= k;
            }
            m
        });
        let logits = &hidden * &self.w2.value + &self.b2.value;
        let probs = softmax(logits.as_slice());
        Ok(ClassifierCache {
            input,
            pre1,
            hidden,
            mask,
            probs,
        })
    }

    /// Gradient of `cross_entropy(probs, label)`. Returns parameter gradients
    /// `[w1, b1, w2, b2]` and the gradient with respect to the latent matrix
    /// (`nodes x width`).
    pub fn backward(&self, cache: &ClassifierCache, label: usize, latent_shape: (usize, usize)) -> Result<(Vec<DMatrix<f64>>, DMatrix<f64>)> {
        let g_logits = DMatrix::from_row_slice(1, cache.probs.len(), &cross_entropy_grad(&cache.probs, label)?);
        self.backward_logits(cache, &g_logits, latent_shape)
    }

    pub fn backward_logits(
        &self,
        cache: &ClassifierCache,
        g_logits: &DMatrix<f64>,
        latent_shape: (usize, usize),
    ) -> Result<(Vec<DMatrix<f64>>, DMatrix<f64>)> {
        if g_logits.ncols() != self.classes() || latent_shape.0 * latent_shape.1 != self.n_in() {
            return Err(Error::StaleCache("classifier: gradient shape mismatch"));
        }
        let gw2 = cache.hidden.transpose() * g_logits;
        let gb2 = g_logits.clone();
        let mut g_hidden = g_logits * self.w2.value.transpose();
        if let Some(mask) = &cache.mask {
            for (g, k) in g_hidden.iter_mut().zip(mask) {
                *g *= k;
            }
        }
        let g_pre1 = Activation::Relu.backprop(&cache.pre1, &g_hidden);
        let gw1 = cache.input.transpose() * &g_pre1;
        let gb1 = g_pre1.clone();
        let g_in = g_pre1 * self.w1.value.transpose();
        let (n, d) = latent_shape;
        let g_latent = DMatrix::from_row_slice(n, d, g_in.as_slice());
        Ok((vec![gw1, gb1, gw2, gb2], g_latent))
    }
}

impl Parameterized for Classifier {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}
