//! Classifier evaluation on source-domain latents.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use rand_chacha::ChaCha8Rng;

use super::{infer, mse, source_latent, BgganModel, Direction, Domain, PreparedSubject};
use crate::analysis::ConfusionCounts;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: usize,
    pub probs_structural: Vec<f64>,
    pub probs_functional: Vec<f64>,
    /// Mean of the two heads' class probabilities.
    pub probs_fused: Vec<f64>,
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = k;
        }
    }
    best
}

pub fn predict(model: &BgganModel, p: &PreparedSubject) -> Result<Prediction> {
    let ls = source_latent(model, p, Domain::Structural)?;
    let lf = source_latent(model, p, Domain::Functional)?;
    let ps = model.classifier_s.forward::<ChaCha8Rng>(&ls, None)?.probs;
    let pf = model.classifier_f.forward::<ChaCha8Rng>(&lf, None)?.probs;
    let fused = ps.iter().zip(&pf).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(Prediction {
        id: p.id.clone(),
        label: p.label,
        probs_structural: ps,
        probs_functional: pf,
        probs_fused: fused,
    })
}

/// Binary confusion counts (positive class 1) for the structural-only,
/// functional-only and fused pipelines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEvaluation {
    pub structural: ConfusionCounts,
    pub functional: ConfusionCounts,
    pub fused: ConfusionCounts,
    pub predictions: Vec<Prediction>,
}

pub fn evaluate_classifiers(model: &BgganModel, data: &[PreparedSubject]) -> Result<ClassifierEvaluation> {
    if model.arch.n_classes != 2 {
        return Err(Error::InvalidConfig(format!(
            "binary metrics need 2 classes, model has {}",
            model.arch.n_classes
        )));
    }
    let predictions = data.par_iter().map(|p| predict(model, p)).collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = predictions.iter().map(|p| p.label).collect();
    let counts = |f: fn(&Prediction) -> &[f64]| {
        let pred: Vec<usize> = predictions.iter().map(|p| argmax(f(p))).collect();
        ConfusionCounts::from_predictions(&labels, &pred, 1)
    };
    Ok(ClassifierEvaluation {
        structural: counts(|p| &p.probs_structural),
        functional: counts(|p| &p.probs_functional),
        fused: counts(|p| &p.probs_fused),
        predictions,
    })
}

/// Mean construction error of the generated matrices against the real ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationError {
    /// `mse(FC', FC)` averaged over subjects.
    pub fc: f64,
    /// `mse(SC', SC)` averaged over subjects.
    pub sc: f64,
}

pub fn generation_error(model: &BgganModel, data: &[PreparedSubject]) -> Result<GenerationError> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("generation error needs at least one subject".into()));
    }
    let per: Vec<(f64, f64)> = data
        .par_iter()
        .map(|p| {
            let fc = infer(model, p, Direction::Sc2Fc)?;
            let sc = infer(model, p, Direction::Fc2Sc)?;
            Ok((mse(&fc, &p.fc), mse(&sc, &p.sc)))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    Ok(GenerationError {
        fc: per.iter().map(|x| x.0).sum::<f64>() / n,
        sc: per.iter().map(|x| x.1).sum::<f64>() / n,
    })
}
