//! Plain GCN classifier baseline: one graph convolution on the structural
//! graph over all modality features, then the dense softmax head.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::PreparedSubject;
use crate::analysis::ConfusionCounts;
use crate::error::{Error, Result};
use crate::nn::innergcn::tensor_to_matrix;
use crate::nn::{adam_step, cross_entropy, gcn_backward, gcn_forward, Activation, AdamConfig, Classifier, Param, Parameterized};

#[derive(Clone, Debug, PartialEq)]
pub struct GcnBaseline {
    pub w: Param,
    pub head: Classifier,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineConfig {
    pub hidden: usize,
    pub classifier_hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            hidden: 16,
            classifier_hidden: 64,
            epochs: 100,
            batch_size: 8,
            lr: 0.0005,
            seed: 0,
        }
    }
}

impl GcnBaseline {
    pub fn new(n: usize, d_in: usize, classes: usize, cfg: &BaselineConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let w = Param::glorot(d_in, cfg.hidden, d_in, cfg.hidden, &mut rng);
        let head = Classifier::new(n * cfg.hidden, cfg.classifier_hidden, classes, &mut rng);
        GcnBaseline { w, head }
    }

    fn input(p: &PreparedSubject) -> DMatrix<f64> {
        tensor_to_matrix(&p.x)
    }

    pub fn probs(&self, p: &PreparedSubject) -> Result<Vec<f64>> {
        let (h, _) = gcn_forward(&Self::input(p), &p.sc, &self.w.value, Activation::Relu)?;
        Ok(self.head.forward::<ChaCha8Rng>(&h, None)?.probs)
    }

    fn sample_grads(&self, p: &PreparedSubject) -> Result<(f64, Vec<DMatrix<f64>>)> {
        let (h, cache) = gcn_forward(&Self::input(p), &p.sc, &self.w.value, Activation::Relu)?;
        let c = self.head.forward::<ChaCha8Rng>(&h, None)?;
        let loss = cross_entropy(&c.probs, p.label)?;
        let (head_grads, g_h) = self.head.backward(&c, p.label, h.shape())?;
        let g = gcn_backward(&cache, &self.w.value, &g_h)?;
        let mut grads = vec![g.w];
        grads.extend(head_grads);
        Ok((loss, grads))
    }

    /// Trains with Adam on mean cross-entropy; returns the epoch-mean loss
    /// curve.
    pub fn train(&mut self, data: &[PreparedSubject], cfg: &BaselineConfig) -> Result<Vec<f64>> {
        if data.is_empty() || cfg.batch_size == 0 {
            return Err(Error::InvalidConfig("baseline needs data and a nonzero batch size".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut curve = Vec::with_capacity(cfg.epochs);
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let per: Vec<(f64, Vec<DMatrix<f64>>)> =
                    batch.par_iter().map(|&i| self.sample_grads(&data[i])).collect::<Result<_>>()?;
                let scale = 1.0 / batch.len() as f64;
                let mut acc: Vec<DMatrix<f64>> = per[0].1.iter().map(|g| g * 0.0).collect();
                for (loss, grads) in &per {
                    total += loss;
                    for (a, g) in acc.iter_mut().zip(grads) {
                        *a += g * scale;
                    }
                }
                let mut params = vec![&mut self.w];
                params.extend(self.head.params_mut());
                for (p, g) in params.into_iter().zip(acc) {
                    p.grad = g;
                    adam_step(p, cfg.lr, AdamConfig::default());
                }
            }
            let mean = total / data.len() as f64;
            if !mean.is_finite() {
                return Err(Error::NonFinite {
                    term: "baseline_cla",
                    epoch: curve.len() + 1,
                    batch: 0,
                });
            }
            curve.push(mean);
        }
        Ok(curve)
    }

    /// Binary confusion counts with class 1 as positive.
    pub fn evaluate(&self, data: &[PreparedSubject]) -> Result<ConfusionCounts> {
        let pred: Vec<usize> = data
            .par_iter()
            .map(|p| {
                let probs = self.probs(p)?;
                Ok(usize::from(probs.get(1).copied().unwrap_or(0.0) > probs[0]))
            })
            .collect::<Result<_>>()?;
        let labels: Vec<usize> = data.iter().map(|p| p.label).collect();
        Ok(ConfusionCounts::from_predictions(&labels, &pred, 1))
    }
}
