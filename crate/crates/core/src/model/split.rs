//! Stratified hold-out splits and k-fold assignment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Subject ids on each side of a hold-out split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

fn shuffled_by_class(labels: &[usize], seed: u64) -> Vec<Vec<usize>> {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..classes)
        .map(|c| {
            let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            idx.shuffle(&mut rng);
            idx
        })
        .collect()
}

/// Holds out `round(fraction * n_c)` samples of every class `c`, keeping at
/// least one training sample per class. Returns sorted `(train, test)`
/// indices.
pub fn holdout_split(labels: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!("hold-out fraction must lie in [0, 1), got {fraction}")));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for idx in shuffled_by_class(labels, seed) {
        let n_test = ((fraction * idx.len() as f64).round() as usize).min(idx.len().saturating_sub(1));
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Fold index of every sample. Each class is shuffled and dealt round-robin,
/// continuing the rotation across classes so fold sizes differ by at most
/// one.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > labels.len() {
        return Err(Error::InvalidConfig(format!(
            "fold count must lie in 2..={}, got {k}",
            labels.len()
        )));
    }
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for idx in shuffled_by_class(labels, seed) {
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}
