//! Adjacency heads `E' = act(F' F'^T)`.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Structural,
    Functional,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Structural: `max(0, softplus(raw) - ln 2)`, zero diagonal.
/// Functional: `tanh(raw)`, unit diagonal.
pub fn generate_adjacency(latent: &DMatrix<f64>, domain: Domain) -> Result<DMatrix<f64>> {
    if latent.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            term: "latent",
            epoch: 0,
            batch: 0,
        });
    }
    Ok(activate(&(latent * latent.transpose()), domain))
}

fn activate(raw: &DMatrix<f64>, domain: Domain) -> DMatrix<f64> {
    let n = raw.nrows();
    DMatrix::from_fn(n, n, |i, j| match (domain, i == j) {
        (Domain::Structural, true) => 0.0,
        (Domain::Functional, true) => 1.0,
        // both orderings of the pair read raw[(min, max)] so the output is
        // exactly symmetric
        (Domain::Structural, false) => (softplus(raw[(i.min(j), i.max(j))]) - LN_2).max(0.0),
        (Domain::Functional, false) => raw[(i.min(j), i.max(j))].tanh(),
    })
}

/// Gradient with respect to `latent` given the upstream gradient on the
/// generated matrix (entries treated independently).
pub fn generate_backward(latent: &DMatrix<f64>, domain: Domain, grad_out: &DMatrix<f64>) -> DMatrix<f64> {
    let raw = latent * latent.transpose();
    let n = raw.nrows();
    let g_raw = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return 0.0;
        }
        let (a, b) = (i.min(j), i.max(j));
        let x = raw[(a, b)];
        let d = match domain {
            Domain::Structural => {
                if x > 0.0 {
                    sigmoid(x)
                } else {
                    0.0
                }
            }
            Domain::Functional => 1.0 - x.tanh().powi(2),
        };
        grad_out[(i, j)] * d
    });
    // every output (i, j) depends on raw[(min, max)], which is symmetric in
    // the latent rows, so d/dL = (G + G^T) L with G the per-entry gradient
    (&g_raw + g_raw.transpose()) * latent
}
