//! `analyze`: connection counts, per-edge group tests and recurrence of
//! top-ranked edges across runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bggan::analysis::{
    bonferroni_alpha, cross_experiment_recurrence, edge_ttests_with, mean_connection_count, top_k_abnormal,
    write_edge_stats_csv, write_recurrence_csv, write_series_csv, EdgeStat, TTestKind,
};
use bggan::synth::{load_cohort, read_matrix, MANIFEST_FILE};
use clap::{Args, ValueEnum};
use nalgebra::DMatrix;

use crate::commands::{GeneratedIndex, GENERATED_FILE};
use crate::error::{CliError, CliResult};
use crate::manifest::{dataset_ref, files_sha256, FileRef, RunManifest, RUN_SCHEMA_VERSION};
use crate::ensure_out;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Mean connection count per class
    Count,
    /// Per-edge two-sample tests between two classes, ranked
    Ttest,
    /// Edges and nodes recurring among the top-k of several inputs
    Recurrence,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainArg {
    Sc,
    Fc,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestArg {
    Welch,
    Pooled,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Output directories of `generate`, or dataset directories
    #[arg(required = true, value_name = "DIR")]
    pub inputs: Vec<PathBuf>,
    /// Matrices to read from dataset directories
    #[arg(long, value_enum)]
    pub domain: Option<DomainArg>,
    /// Length of each top-ranked edge list
    #[arg(long, default_value_t = 30)]
    pub k: usize,
    /// Significance level for the top-ranked lists
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Divide alpha by the number of edges tested
    #[arg(long)]
    pub bonferroni: bool,
    /// Two-sample test variant
    #[arg(long, value_enum, default_value_t = TestArg::Welch)]
    pub test: TestArg,
    /// Label of the first group
    #[arg(long, default_value_t = 0)]
    pub group_a: usize,
    /// Label of the second group
    #[arg(long, default_value_t = 1)]
    pub group_b: usize,
    /// Structural connection threshold for counting
    #[arg(long, default_value_t = 0.1)]
    pub sc_threshold: f64,
    /// Functional |correlation| threshold for counting
    #[arg(long, default_value_t = 0.3)]
    pub fc_threshold: f64,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

struct Source {
    structural: bool,
    labelled: Vec<(usize, DMatrix<f64>)>,
    reference: FileRef,
}

fn load_source(dir: &Path, domain: Option<DomainArg>) -> CliResult<Source> {
    let index_path = dir.join(GENERATED_FILE);
    if index_path.exists() {
        let text = fs::read_to_string(&index_path).map_err(|e| CliError::io(&index_path, e))?;
        let index: GeneratedIndex = serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("{}: {e}", index_path.display())))?;
        let labelled = index
            .subjects
            .iter()
            .map(|s| Ok((s.label, read_matrix(&dir.join(&s.file))?)))
            .collect::<CliResult<Vec<_>>>()?;
        let mut names = vec![GENERATED_FILE.to_string()];
        names.extend(index.subjects.iter().map(|s| s.file.clone()));
        return Ok(Source {
            structural: index.domain == "structural",
            labelled,
            reference: FileRef { path: dir.display().to_string(), sha256: files_sha256(dir, &names)? },
        });
    }
    if dir.join(MANIFEST_FILE).exists() {
        let domain = domain.ok_or_else(|| {
            CliError::usage(format!("{} is a dataset directory; pass --domain sc or --domain fc", dir.display()))
        })?;
        let labelled = load_cohort(dir)?
            .into_iter()
            .map(|s| match domain {
                DomainArg::Sc => (s.label, s.sc),
                DomainArg::Fc => (s.label, s.fc),
            })
            .collect();
        return Ok(Source { structural: domain == DomainArg::Sc, labelled, reference: dataset_ref(dir)? });
    }
    Err(CliError::validation(format!(
        "{} holds neither {GENERATED_FILE} nor {MANIFEST_FILE}",
        dir.display()
    )))
}

fn group(src: &Source, label: usize) -> Vec<DMatrix<f64>> {
    src.labelled.iter().filter(|(l, _)| *l == label).map(|(_, m)| m.clone()).collect()
}

/// Sorted by ascending p, ties by `(i, j)`.
fn ranked(mut stats: Vec<EdgeStat>) -> Vec<EdgeStat> {
    stats.sort_by(|a, b| a.p_value.total_cmp(&b.p_value).then((a.i, a.j).cmp(&(b.i, b.j))));
    stats
}

pub fn analyze(a: &AnalyzeArgs) -> CliResult<()> {
    if a.mode == Mode::Recurrence && a.inputs.len() < 2 {
        return Err(CliError::usage("recurrence needs at least two inputs"));
    }
    if !(a.alpha > 0.0 && a.alpha <= 1.0) {
        return Err(CliError::usage(format!("--alpha must lie in (0, 1], got {}", a.alpha)));
    }
    let sources = a.inputs.iter().map(|d| load_source(d, a.domain)).collect::<CliResult<Vec<_>>>()?;
    ensure_out(&a.out)?;
    let mut artifacts = Vec::new();
    let mut summary = String::new();
    match a.mode {
        Mode::Count => {
            let mut table = String::from("source,label,subjects,mean_count\n");
            for (k, src) in sources.iter().enumerate() {
                let threshold = if src.structural { a.sc_threshold } else { a.fc_threshold };
                let mut labels: Vec<usize> = src.labelled.iter().map(|(l, _)| *l).collect();
                labels.sort_unstable();
                labels.dedup();
                let mut trend = Vec::new();
                for l in labels {
                    let mats = group(src, l);
                    let mean = mean_connection_count(&mats, threshold);
                    writeln!(table, "{k},{l},{},{mean}", mats.len()).expect("string write");
                    trend.push((l as f64, mean));
                }
                let name = format!("trend_{k}.csv");
                write_series_csv(&a.out.join(&name), "label", "mean_count", &trend)?;
                artifacts.push(name);
            }
            let path = a.out.join("counts.csv");
            fs::write(&path, &table).map_err(|e| CliError::io(&path, e))?;
            artifacts.insert(0, "counts.csv".into());
            summary = table;
        }
        Mode::Ttest | Mode::Recurrence => {
            let kind = match a.test {
                TestArg::Welch => TTestKind::Welch,
                TestArg::Pooled => TTestKind::Pooled,
            };
            let mut tops = Vec::new();
            for (k, src) in sources.iter().enumerate() {
                let stats = ranked(edge_ttests_with(&group(src, a.group_a), &group(src, a.group_b), kind)?);
                let alpha = if a.bonferroni { bonferroni_alpha(a.alpha, stats.len()) } else { a.alpha };
                let top = top_k_abnormal(&stats, a.k, alpha);
                if a.mode == Mode::Ttest {
                    let name = format!("ttest_{k}.csv");
                    write_edge_stats_csv(&a.out.join(&name), &stats)?;
                    artifacts.push(name);
                }
                let name = format!("topk_{k}.csv");
                write_edge_stats_csv(&a.out.join(&name), &top.edges)?;
                artifacts.push(name);
                writeln!(summary, "input {k}: {} edges below alpha {alpha}", top.significant).expect("string write");
                for (r, e) in top.edges.iter().take(10).enumerate() {
                    writeln!(summary, "  {:>2}. ({}, {})  t = {:.3}  p = {:.3e}", r + 1, e.i, e.j, e.t_value, e.p_value)
                        .expect("string write");
                }
                tops.push(top.edges);
            }
            if a.mode == Mode::Recurrence {
                let rec = cross_experiment_recurrence(&tops)?;
                write_recurrence_csv(&a.out.join("recurrence.csv"), &rec)?;
                artifacts.push("recurrence.csv".into());
                writeln!(summary, "recurring edges: {}", rec.edges.iter().filter(|(_, c)| *c > 1).count())
                    .expect("string write");
            }
        }
    }
    print!("{summary}");
    RunManifest {
        schema_version: RUN_SCHEMA_VERSION,
        command: "analyze".into(),
        seed: 0,
        config: serde_json::json!({
            "mode": format!("{:?}", a.mode).to_lowercase(),
            "k": a.k,
            "alpha": a.alpha,
            "bonferroni": a.bonferroni,
            "test": format!("{:?}", a.test).to_lowercase(),
            "group_a": a.group_a,
            "group_b": a.group_b,
            "sc_threshold": a.sc_threshold,
            "fc_threshold": a.fc_threshold,
        }),
        dataset: None,
        inputs: sources.into_iter().map(|s| s.reference).collect(),
        artifacts,
    }
    .write(&a.out)
}
