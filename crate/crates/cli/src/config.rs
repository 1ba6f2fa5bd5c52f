//! Training configuration: defaults, then the TOML file, then flags.

use std::fs;
use std::path::Path;

use bggan::model::TrainConfig;
use clap::Args;

use crate::error::{CliError, CliResult};

/// Flags that override keys of the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Root seed for initialization, batching, dropout and splits
    #[arg(long)]
    pub seed: Option<u64>,
    /// Generator learning rate
    #[arg(long, value_name = "LR")]
    pub lr_gen: Option<f64>,
    /// Discriminator learning rate
    #[arg(long, value_name = "LR")]
    pub lr_disc: Option<f64>,
    /// Balancer learning rate
    #[arg(long, value_name = "LR")]
    pub lr_balancer: Option<f64>,
    /// Subjects per mini-batch
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Upper bound on training epochs
    #[arg(long, value_name = "N")]
    pub max_epochs: Option<usize>,
    /// Last epoch with an active Balancer (K); when set nowhere, the
    /// default is capped at max_epochs
    #[arg(long, value_name = "K")]
    pub balancer_cutoff: Option<usize>,
    /// Weight on the generator adversarial terms
    #[arg(long, value_name = "W")]
    pub adv_weight: Option<f64>,
    /// Early-stopping patience in epochs
    #[arg(long, value_name = "N")]
    pub patience: Option<usize>,
    /// Number of InnerGCN layers per extractor
    #[arg(long, value_name = "N")]
    pub inner_layers: Option<usize>,
    /// Train without the Balancer
    #[arg(long)]
    pub no_balancer: bool,
}

fn read_table(path: &Path) -> CliResult<toml::Table> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.parse::<toml::Table>()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

/// Parses a TOML file into `T`, rejecting unknown keys.
pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    read_table(path)?
        .try_into()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

/// Resolves the training configuration for a dataset with `n_rois`
/// regions. An explicit `n_rois` key must agree with the dataset.
pub fn resolve(file: Option<&Path>, ov: &Overrides, n_rois: usize) -> CliResult<TrainConfig> {
    let table = match file {
        Some(p) => read_table(p)?,
        None => toml::Table::new(),
    };
    let cutoff_in_file = table.contains_key("balancer_cutoff");
    if let Some(v) = table.get("n_rois").and_then(|v| v.as_integer()) {
        if v != n_rois as i64 {
            return Err(CliError::validation(format!(
                "config sets n_rois = {v} but the dataset has {n_rois} regions"
            )));
        }
    }
    let mut cfg: TrainConfig = table.try_into().map_err(|e| {
        CliError::validation(format!("{}: {e}", file.map_or("<config>".into(), |p| p.display().to_string())))
    })?;
    cfg.n_rois = n_rois;
    macro_rules! apply {
        ($($f:ident),*) => { $(if let Some(v) = ov.$f { cfg.$f = v; })* };
    }
    apply!(seed, lr_gen, lr_disc, lr_balancer, batch_size, max_epochs, balancer_cutoff, adv_weight, patience, inner_layers);
    if ov.no_balancer {
        cfg.use_balancer = false;
    }
    if !cutoff_in_file && ov.balancer_cutoff.is_none() {
        cfg.balancer_cutoff = cfg.balancer_cutoff.min(cfg.max_epochs);
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "lr_gen = 0.001\nbatch_size = 4\nmax_epochs = 20\n").unwrap();
        let ov = Overrides { batch_size: Some(2), ..Overrides::default() };
        let cfg = resolve(Some(&p), &ov, 20).unwrap();
        assert_eq!(cfg.lr_gen, 0.001);
        assert_eq!(cfg.batch_size, 2);
        assert_eq!(cfg.lr_disc, TrainConfig::default().lr_disc);
        assert_eq!(cfg.balancer_cutoff, 20);
        assert_eq!(cfg.n_rois, 20);
    }

    #[test]
    fn unknown_and_conflicting_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "learning_rate = 0.1\n").unwrap();
        assert!(resolve(Some(&p), &Overrides::default(), 20).is_err());
        fs::write(&p, "n_rois = 90\n").unwrap();
        assert!(resolve(Some(&p), &Overrides::default(), 20).is_err());
    }

    #[test]
    fn explicit_cutoff_is_validated() {
        let ov = Overrides { max_epochs: Some(5), balancer_cutoff: Some(10), ..Overrides::default() };
        assert!(resolve(None, &ov, 20).is_err());
    }
}
