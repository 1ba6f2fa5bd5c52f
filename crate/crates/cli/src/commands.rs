//! `synth`, `train`, `generate` and `evaluate`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use bggan::analysis::{metrics, write_metrics_csv, write_series_csv, MetricsRow};
use bggan::model::{
    evaluate_classifiers, fit, generation_error, holdout_split, infer, prepare, Architecture, BaselineConfig,
    BgganModel, Direction, GcnBaseline, LossReport, PreparedSubject, Split,
};
use bggan::synth::{load_cohort, make_cohort, matrix_to_csv, save_cohort, CohortSpec};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::config::{self, Overrides};
use crate::error::{CliError, CliResult};
use crate::manifest::{dataset_ref, file_ref, RunManifest, RUN_SCHEMA_VERSION};
use crate::{ensure_out, Subset};

pub const CHECKPOINT_FILE: &str = "model.bggan";
pub const LOSS_FILE: &str = "loss.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const GENERATED_FILE: &str = "generated.json";

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> CliResult<()> {
    write_text(path, &(serde_json::to_string_pretty(v).expect("serializes") + "\n"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub(crate) fn load_prepared(dir: &Path) -> CliResult<Vec<PreparedSubject>> {
    let cohort = load_cohort(dir)?;
    Ok(prepare(&cohort)?)
}

/// Keeps the subjects whose ids the split lists on the chosen side.
fn select(data: Vec<PreparedSubject>, split: &Split, subset: Subset) -> CliResult<Vec<PreparedSubject>> {
    let ids = match subset {
        Subset::Train => &split.train,
        Subset::Test => &split.test,
    };
    if let Some(missing) = ids.iter().find(|id| !data.iter().any(|p| &p.id == *id)) {
        return Err(CliError::validation(format!("split lists subject {missing:?}, absent from the dataset")));
    }
    let keep: Vec<PreparedSubject> = data.into_iter().filter(|p| ids.contains(&p.id)).collect();
    if keep.is_empty() {
        return Err(CliError::validation(format!("split selects no {subset:?} subjects").to_lowercase()));
    }
    Ok(keep)
}

fn load_model(path: &Path) -> CliResult<BgganModel> {
    if !path.exists() {
        return Err(CliError::validation(format!("missing file: {}", path.display())));
    }
    Ok(BgganModel::load(path)?)
}

fn check_compatible(model: &BgganModel, data: &[PreparedSubject]) -> CliResult<()> {
    let p = &data[0];
    let (n, d, r) = p.x.dims();
    let a = &model.arch;
    if (a.n_rois, a.feat_dim, a.n_modalities) != (n, d, r) {
        return Err(CliError::validation(format!(
            "checkpoint expects {} regions with {} x {} features, dataset has {n} regions with {d} x {r}",
            a.n_rois, a.feat_dim, a.n_modalities
        )));
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Cohort description (TOML with CohortSpec keys); defaults apply to
    /// absent keys
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    /// Overrides the spec's seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

pub fn synth(a: &SynthArgs) -> CliResult<()> {
    let mut spec: CohortSpec = match &a.spec {
        Some(p) => config::read_toml(p)?,
        None => CohortSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let cohort = make_cohort(&spec)?;
    ensure_out(&a.out)?;
    save_cohort(&a.out, &cohort)?;
    let manifest = bggan::synth::read_manifest(&a.out)?;
    let mut artifacts = vec![bggan::synth::MANIFEST_FILE.to_string()];
    for s in &manifest.subjects {
        artifacts.push(s.sc.clone());
        artifacts.push(s.fc.clone());
        artifacts.extend(s.feats.iter().cloned());
    }
    let mut inputs = Vec::new();
    if let Some(p) = &a.spec {
        inputs.push(file_ref(p)?);
    }
    RunManifest {
        schema_version: RUN_SCHEMA_VERSION,
        command: "synth".into(),
        seed: spec.seed,
        config: serde_json::to_value(&spec).expect("serializes"),
        dataset: Some(dataset_ref(&a.out)?),
        inputs,
        artifacts,
    }
    .write(&a.out)?;
    eprintln!("wrote {} subjects to {}", cohort.len(), a.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// TOML file with TrainConfig keys
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Fraction of each class held out from training (recorded in split.json)
    #[arg(long, value_name = "FRACTION", default_value_t = 0.0)]
    pub holdout: f64,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let data = load_prepared(&a.data)?;
    let n_rois = data[0].n();
    let cfg = config::resolve(a.config.as_deref(), &a.overrides, n_rois)?;
    let labels: Vec<usize> = data.iter().map(|p| p.label).collect();
    if let Some(&bad) = labels.iter().find(|&&l| l >= cfg.n_classes) {
        return Err(CliError::validation(format!("label {bad} out of range for {} classes", cfg.n_classes)));
    }
    let (train_idx, test_idx) = holdout_split(&labels, a.holdout, cfg.seed)?;
    let split = Split {
        seed: cfg.seed,
        train: train_idx.iter().map(|&i| data[i].id.clone()).collect(),
        test: test_idx.iter().map(|&i| data[i].id.clone()).collect(),
    };
    let train: Vec<PreparedSubject> = train_idx.iter().map(|&i| data[i].clone()).collect();

    ensure_out(&a.out)?;
    write_json(&a.out.join(SPLIT_FILE), &split)?;
    let log_path = a.out.join(LOSS_FILE);
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?);
    let io_err = |e| CliError::io(&log_path, e);
    writeln!(log, "epoch,{},wall_time_ms", LossReport::CSV_HEADER).map_err(io_err)?;

    let mut model = BgganModel::new(Architecture::new(&cfg, data[0].x.dims().1), cfg.seed);
    let start = Instant::now();
    let mut log_err = None;
    let summary = fit(&mut model, &train, &cfg, |out, _| {
        let ms = start.elapsed().as_millis();
        let row = writeln!(log, "{},{},{ms}", out.epoch, out.mean.csv_fields()).and_then(|_| log.flush());
        if let Err(e) = row {
            log_err = Some(e);
        }
        if out.epoch == 1 || out.epoch % 10 == 0 {
            eprintln!("epoch {:>5}  l_cons {:.6}  total {:.6}", out.epoch, out.mean.l_cons, out.mean.total);
        }
        Ok(())
    })?;
    drop(log);
    if let Some(e) = log_err {
        return Err(CliError::io(&log_path, e));
    }
    if summary.stopped_early {
        eprintln!("stopped early after {} epochs", summary.history.len());
    }
    model.save(&a.out.join(CHECKPOINT_FILE))?;
    let curve: Vec<(f64, f64)> = summary.history.iter().map(|r| (r.epoch as f64, r.report.l_cons)).collect();
    write_series_csv(&a.out.join("loss_curve.csv"), "epoch", "l_cons", &curve)?;

    let mut inputs = Vec::new();
    if let Some(p) = &a.config {
        inputs.push(file_ref(p)?);
    }
    RunManifest {
        schema_version: RUN_SCHEMA_VERSION,
        command: "train".into(),
        seed: cfg.seed,
        config: serde_json::json!({ "train": cfg, "holdout": a.holdout }),
        dataset: Some(dataset_ref(&a.data)?),
        inputs,
        artifacts: vec![CHECKPOINT_FILE.into(), LOSS_FILE.into(), "loss_curve.csv".into(), SPLIT_FILE.into()],
    }
    .write(&a.out)
}

/// Index of a `generate` output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedIndex {
    pub schema_version: u32,
    pub direction: Direction,
    /// `structural` or `functional`: the domain of the generated matrices.
    pub domain: String,
    pub n_rois: usize,
    pub subjects: Vec<GeneratedEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedEntry {
    pub id: String,
    pub label: usize,
    pub file: String,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Trained checkpoint
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// sc2fc generates functional matrices, fc2sc structural ones
    #[arg(long)]
    pub direction: Direction,
    /// Restricts generation to one side of a split file
    #[arg(long, value_name = "FILE")]
    pub split: Option<PathBuf>,
    /// Side of the split to use
    #[arg(long, value_enum, default_value_t = Subset::Test, requires = "split")]
    pub subset: Subset,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

pub fn generate(a: &GenerateArgs) -> CliResult<()> {
    let model = load_model(&a.checkpoint)?;
    let mut data = load_prepared(&a.data)?;
    let mut inputs = vec![file_ref(&a.checkpoint)?];
    if let Some(p) = &a.split {
        data = select(data, &read_json(p)?, a.subset)?;
        inputs.push(file_ref(p)?);
    }
    check_compatible(&model, &data)?;
    ensure_out(&a.out)?;
    let mut subjects = Vec::with_capacity(data.len());
    for p in &data {
        let m = infer(&model, p, a.direction)?;
        let file = format!("gen_{}.csv", p.id);
        write_text(&a.out.join(&file), &matrix_to_csv(&m))?;
        subjects.push(GeneratedEntry { id: p.id.clone(), label: p.label, file });
    }
    let domain = match a.direction {
        Direction::Sc2Fc => "functional",
        Direction::Fc2Sc => "structural",
    };
    let index = GeneratedIndex {
        schema_version: RUN_SCHEMA_VERSION,
        direction: a.direction,
        domain: domain.into(),
        n_rois: model.arch.n_rois,
        subjects,
    };
    write_json(&a.out.join(GENERATED_FILE), &index)?;
    let mut artifacts = vec![GENERATED_FILE.to_string()];
    artifacts.extend(index.subjects.iter().map(|s| s.file.clone()));
    RunManifest {
        schema_version: RUN_SCHEMA_VERSION,
        command: "generate".into(),
        seed: 0,
        config: serde_json::json!({ "direction": a.direction, "subset": a.split.as_ref().map(|_| format!("{:?}", a.subset).to_lowercase()) }),
        dataset: Some(dataset_ref(&a.data)?),
        inputs,
        artifacts,
    }
    .write(&a.out)?;
    eprintln!("generated {} {domain} matrices", index.subjects.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Trained checkpoint
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Split file from `train`; evaluation uses its test side
    #[arg(long, value_name = "FILE")]
    pub split: Option<PathBuf>,
    /// Also train and score a plain GCN classifier on the split's training side
    #[arg(long, requires = "split")]
    pub baseline: bool,
    /// Training epochs of the GCN baseline
    #[arg(long, value_name = "N", default_value_t = 100)]
    pub baseline_epochs: usize,
    /// Seed of the GCN baseline
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let model = load_model(&a.checkpoint)?;
    let data = load_prepared(&a.data)?;
    check_compatible(&model, &data)?;
    let mut inputs = vec![file_ref(&a.checkpoint)?];
    let (train, test) = match &a.split {
        Some(p) => {
            let split: Split = read_json(p)?;
            inputs.push(file_ref(p)?);
            let train = if a.baseline { select(data.clone(), &split, Subset::Train)? } else { Vec::new() };
            (train, select(data, &split, Subset::Test)?)
        }
        None => (Vec::new(), data),
    };
    let eval = evaluate_classifiers(&model, &test)?;
    let row = |name: &str, counts| MetricsRow { pipeline: name.into(), counts, metrics: metrics(&counts) };
    let mut rows = vec![
        row("structural", eval.structural),
        row("functional", eval.functional),
        row("fused", eval.fused),
    ];
    if a.baseline {
        let cfg = BaselineConfig { epochs: a.baseline_epochs, seed: a.seed, ..BaselineConfig::default() };
        let (n, d, r) = train[0].x.dims();
        let mut base = GcnBaseline::new(n, d * r, model.arch.n_classes, &cfg);
        base.train(&train, &cfg)?;
        rows.push(row("gcn_baseline", base.evaluate(&test)?));
    }
    ensure_out(&a.out)?;
    let metrics_path = a.out.join("metrics.csv");
    write_metrics_csv(&metrics_path, &rows)?;

    let mut pred = String::from("id,label,p_structural,p_functional,p_fused\n");
    for p in &eval.predictions {
        pred += &format!("{},{},{},{},{}\n", p.id, p.label, p.probs_structural[1], p.probs_functional[1], p.probs_fused[1]);
    }
    write_text(&a.out.join("predictions.csv"), &pred)?;
    let gen = generation_error(&model, &test)?;
    write_text(
        &a.out.join("generation.csv"),
        &format!("direction,mse\nsc2fc,{}\nfc2sc,{}\n", gen.fc, gen.sc),
    )?;

    print!("{}", fs::read_to_string(&metrics_path).map_err(|e| CliError::io(&metrics_path, e))?);
    println!("generation mse: sc2fc {:.6}, fc2sc {:.6}", gen.fc, gen.sc);
    RunManifest {
        schema_version: RUN_SCHEMA_VERSION,
        command: "evaluate".into(),
        seed: a.seed,
        config: serde_json::json!({ "baseline": a.baseline, "baseline_epochs": a.baseline_epochs }),
        dataset: Some(dataset_ref(&a.data)?),
        inputs,
        artifacts: vec!["metrics.csv".into(), "predictions.csv".into(), "generation.csv".into()],
    }
    .write(&a.out)
}
