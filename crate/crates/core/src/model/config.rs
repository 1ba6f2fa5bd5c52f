use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training hyperparameters and architecture knobs.
///
/// Field names double as the flat key set of the TOML config file read by
/// the command-line driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_gen: f64,
    pub lr_disc: f64,
    pub lr_balancer: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub n_rois: usize,
    pub dropout: f64,
    /// Last epoch at which the Balancer is active (`K`).
    pub balancer_cutoff: usize,
    /// Fixed weight on the cross-route reconstruction term; `None` uses the
    /// decay schedule value.
    pub lambda_recon: Option<f64>,
    /// Fixed weight on the Balancer's adversarial term; `None` uses the
    /// decay schedule value.
    pub lambda_balancer: Option<f64>,
    /// Remaps the schedule value to `1 + lambda` (range `(1, 2]`) while the
    /// Balancer is active.
    pub lambda_remap: bool,
    /// Per-domain weights on the construction and reconstruction terms.
    pub lambda_sc: f64,
    pub lambda_fc: f64,
    /// Weight on the generator adversarial terms.
    pub adv_weight: f64,
    pub use_balancer: bool,
    pub seed: u64,
    pub patience: usize,
    pub min_delta: f64,
    pub gcn_hidden: usize,
    pub latent_dim: usize,
    pub inner_layers: usize,
    pub disc_hidden: usize,
    pub classifier_hidden: usize,
    pub balancer_hidden: usize,
    pub n_classes: usize,
    /// Connection-counting thresholds (structural strength, |correlation|).
    pub sc_threshold: f64,
    pub fc_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_gen: 0.0005,
            lr_disc: 0.0005,
            lr_balancer: 0.0005,
            batch_size: 8,
            max_epochs: 1000,
            n_rois: 90,
            dropout: 0.5,
            balancer_cutoff: 300,
            lambda_recon: None,
            lambda_balancer: None,
            lambda_remap: false,
            lambda_sc: 1.0,
            lambda_fc: 1.0,
            adv_weight: 0.01,
            use_balancer: true,
            seed: 0,
            patience: 50,
            min_delta: 1e-5,
            gcn_hidden: 16,
            latent_dim: 16,
            inner_layers: 3,
            disc_hidden: 16,
            classifier_hidden: 64,
            balancer_hidden: 8,
            n_classes: 2,
            sc_threshold: 0.1,
            fc_threshold: 0.3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, v) in [
            ("lr_gen", self.lr_gen),
            ("lr_disc", self.lr_disc),
            ("lr_balancer", self.lr_balancer),
            ("lambda_sc", self.lambda_sc),
            ("lambda_fc", self.lambda_fc),
            ("sc_threshold", self.sc_threshold),
            ("fc_threshold", self.fc_threshold),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.adv_weight.is_finite() && self.adv_weight >= 0.0) {
            return bad(format!("adv_weight must be nonnegative, got {}", self.adv_weight));
        }
        if !(self.min_delta.is_finite() && self.min_delta >= 0.0) {
            return bad(format!("min_delta must be nonnegative, got {}", self.min_delta));
        }
        for (name, v) in [("lambda_recon", self.lambda_recon), ("lambda_balancer", self.lambda_balancer)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return bad(format!("{name} must be nonnegative, got {v}"));
                }
            }
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("n_rois", self.n_rois),
            ("balancer_cutoff", self.balancer_cutoff),
            ("patience", self.patience),
            ("gcn_hidden", self.gcn_hidden),
            ("latent_dim", self.latent_dim),
            ("disc_hidden", self.disc_hidden),
            ("classifier_hidden", self.classifier_hidden),
            ("balancer_hidden", self.balancer_hidden),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.n_classes < 2 {
            return bad("n_classes must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.balancer_cutoff > self.max_epochs {
            return bad(format!(
                "balancer_cutoff ({}) exceeds max_epochs ({})",
                self.balancer_cutoff, self.max_epochs
            ));
        }
        Ok(())
    }
}
