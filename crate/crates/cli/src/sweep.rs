//! `sweep`: k-fold generation error over a learning-rate by layer-count
//! grid.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use bggan::model::{fit, generation_error, stratified_folds, Architecture, BgganModel, PreparedSubject, TrainConfig};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::commands::load_prepared;
use crate::config::{self, Overrides};
use crate::error::{CliError, CliResult};
use crate::manifest::{dataset_ref, file_ref, RunManifest, RUN_SCHEMA_VERSION};
use crate::ensure_out;

/// Grid file keys. Learning rates apply to generators and discriminators
/// alike.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub learning_rates: Vec<f64>,
    pub inner_layers: Vec<usize>,
    pub folds: usize,
    /// Epochs per fold, far below a full run.
    pub epochs: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            learning_rates: vec![0.01, 0.005, 0.001, 0.0005, 0.0001],
            inner_layers: vec![1, 2, 3, 4, 5],
            folds: 10,
            epochs: 20,
        }
    }
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// TOML grid (learning_rates, inner_layers, folds, epochs)
    #[arg(long, value_name = "FILE")]
    pub grid: Option<PathBuf>,
    /// TOML file with TrainConfig keys for everything the grid leaves fixed
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Mean held-out generation error of one grid cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub lr: f64,
    pub inner_layers: usize,
    pub mse_fc: f64,
    pub mse_sc: f64,
}

pub fn cross_validate(data: &[PreparedSubject], folds: &[usize], k: usize, cfg: &TrainConfig) -> CliResult<(f64, f64)> {
    let (mut fc, mut sc) = (0.0, 0.0);
    for f in 0..k {
        let train: Vec<PreparedSubject> =
            data.iter().zip(folds).filter(|(_, &g)| g != f).map(|(p, _)| p.clone()).collect();
        let held: Vec<PreparedSubject> =
            data.iter().zip(folds).filter(|(_, &g)| g == f).map(|(p, _)| p.clone()).collect();
        let mut model = BgganModel::new(Architecture::new(cfg, data[0].x.dims().1), cfg.seed);
        fit(&mut model, &train, cfg, |_, _| Ok(()))?;
        let e = generation_error(&model, &held)?;
        fc += e.fc;
        sc += e.sc;
    }
    Ok((fc / k as f64, sc / k as f64))
}

pub fn sweep(a: &SweepArgs) -> CliResult<()> {
    let grid: SweepGrid = match &a.grid {
        Some(p) => config::read_toml(p)?,
        None => SweepGrid::default(),
    };
    if grid.learning_rates.is_empty() || grid.inner_layers.is_empty() || grid.epochs == 0 {
        return Err(CliError::validation("grid needs learning rates, layer counts and a positive epoch count"));
    }
    let data = load_prepared(&a.data)?;
    let base = config::resolve(a.config.as_deref(), &a.overrides, data[0].n())?;
    let labels: Vec<usize> = data.iter().map(|p| p.label).collect();
    let folds = stratified_folds(&labels, grid.folds, base.seed)?;

    ensure_out(&a.out)?;
    let mut table = String::from("lr,inner_layers,mse_fc,mse_sc,mse\n");
    let mut best: Option<Cell> = None;
    for &lr in &grid.learning_rates {
        for &layers in &grid.inner_layers {
            let cfg = TrainConfig {
                lr_gen: lr,
                lr_disc: lr,
                inner_layers: layers,
                max_epochs: grid.epochs,
                balancer_cutoff: base.balancer_cutoff.min(grid.epochs),
                ..base.clone()
            };
            cfg.validate()?;
            let (mse_fc, mse_sc) = cross_validate(&data, &folds, grid.folds, &cfg)?;
            let cell = Cell { lr, inner_layers: layers, mse_fc, mse_sc };
            let mse = 0.5 * (mse_fc + mse_sc);
            writeln!(table, "{lr},{layers},{mse_fc},{mse_sc},{mse}").expect("string write");
            eprintln!("lr {lr:<8} layers {layers}  mse {mse:.6}");
            if best.is_none_or(|b| mse < 0.5 * (b.mse_fc + b.mse_sc)) {
                best = Some(cell);
            }
        }
    }
    let path = a.out.join("sweep.csv");
    fs::write(&path, &table).map_err(|e| CliError::io(&path, e))?;
    print!("{table}");
    if let Some(b) = best {
        println!("lowest error: lr {} with {} InnerGCN layers", b.lr, b.inner_layers);
    }
    let mut inputs = Vec::new();
    for p in [&a.grid, &a.config].into_iter().flatten() {
        inputs.push(file_ref(p)?);
    }
    RunManifest {
        schema_version: RUN_SCHEMA_VERSION,
        command: "sweep".into(),
        seed: base.seed,
        config: serde_json::json!({ "train": base, "grid": grid }),
        dataset: Some(dataset_ref(&a.data)?),
        inputs,
        artifacts: vec!["sweep.csv".into()],
    }
    .write(&a.out)
}
