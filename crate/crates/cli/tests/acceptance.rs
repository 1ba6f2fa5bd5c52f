//! Acceptance suite. Every test prints one `PASS` or `FAIL` line for its
//! criterion. Criteria 6 and 7 are training outcomes rather than
//! properties of the code: their lines report what the run achieved and
//! the test only asserts that the run itself completed soundly.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use bggan::analysis::{edge_ttests, t_two_sided_p, EdgeStat};
use bggan::model::{
    evaluate_classifiers, holdout_split, infer, lambda_schedule, prepare, train_epoch, Architecture, BaselineConfig,
    BgganModel, Direction, GcnBaseline, PreparedSubject, TrainConfig,
};
use bggan::spectral::{normalized_laplacian, spectral_basis, SliceKind};
use bggan::synth::{make_cohort, CohortSpec, PlantedEdge, Subject};
use bggan::tensor::{idft3, tprod, Tensor3, C64};
use nalgebra::DMatrix;
use rand::Rng;

fn verdict(id: u32, name: &str, pass: bool, detail: String) -> bool {
    // written to the handle, not via println!, so the line survives output capture
    let line = format!("{} criterion {id} ({name}): {detail}\n", if pass { "PASS" } else { "FAIL" });
    std::io::Write::write_all(&mut std::io::stdout().lock(), line.as_bytes()).expect("stdout");
    pass
}

fn random_tensor(n1: usize, n2: usize, r: usize, rng: &mut impl Rng) -> Tensor3 {
    Tensor3::from_fn(n1, n2, r, |_, _, _| rng.random_range(-1.0..1.0))
}

/// `bcirc(A) * unfold(B)` with the block-circulant matrix written out.
fn block_circulant_product(a: &Tensor3, b: &Tensor3) -> Tensor3 {
    let (n1, n2, r) = a.dims();
    let n3 = b.dims().1;
    let bcirc = DMatrix::from_fn(n1 * r, n2 * r, |row, col| {
        let (bi, bj) = (row / n1, col / n2);
        a.get(row % n1, col % n2, (bi + r - bj) % r).re
    });
    let unfolded = DMatrix::from_fn(n2 * r, n3, |row, col| b.get(row % n2, col, row / n2).re);
    let c = bcirc * unfolded;
    Tensor3::from_fn(n1, n3, r, |i, j, k| c[(k * n1 + i, j)])
}

#[test]
fn criterion_01_tproduct_matches_block_circulant_definition() {
    let start = Instant::now();
    let mut rng = common::rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (n1, n2, n3, r) =
            (rng.random_range(1..=6), rng.random_range(1..=6), rng.random_range(1..=6), rng.random_range(1..=5));
        let a = random_tensor(n1, n2, r, &mut rng);
        let b = random_tensor(n2, n3, r, &mut rng);
        worst = worst.max(tprod(&a, &b).unwrap().max_abs_diff(&block_circulant_product(&a, &b)));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-9 && secs < 5.0;
    assert!(verdict(1, "t-product oracle", pass, format!("max abs error {worst:.2e} (< 1e-9), {secs:.2} s (< 5 s)")));
}

#[test]
fn criterion_02_spectral_reconstruction() {
    let start = Instant::now();
    let kinds = [SliceKind::Structural, SliceKind::Functional, SliceKind::Structural];
    let mut rng = common::rng(2);
    let (mut worst, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..50 {
        let slices: Vec<DMatrix<f64>> = (0..3)
            .map(|k| {
                let mut a = common::random_adjacency(8, &mut rng);
                if kinds[k] == SliceKind::Functional {
                    a.iter_mut().for_each(|v| *v = 2.0 * *v - 1.0);
                    a.fill_diagonal(0.0);
                }
                a
            })
            .collect();
        let lap = normalized_laplacian(&Tensor3::from_real_slices(&slices).unwrap(), &kinds).unwrap();
        let basis = spectral_basis(&lap).unwrap();
        let rebuilt: Vec<DMatrix<C64>> = (0..3)
            .map(|k| &basis.u_hat[k] * DMatrix::from_diagonal(&basis.lambda_hat[k]) * &basis.u_inv_hat[k])
            .collect();
        let rebuilt = idft3(&Tensor3::from_slices(&rebuilt).unwrap());
        worst = worst.max(rebuilt.max_abs_diff(lap.value()));
        for z in basis.lambda_hat[0].iter() {
            lo = lo.min(z.re);
            hi = hi.max(z.re);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-7 && lo >= 0.0 - 1e-12 && hi <= 6.0 + 1e-8 && secs < 10.0;
    assert!(verdict(
        2,
        "spectral reconstruction",
        pass,
        format!("max error {worst:.2e} (< 1e-7), DC eigenvalues in [{lo:.3e}, {hi:.4}] within [0, 6], {secs:.2} s")
    ));
}

#[test]
fn criterion_03_gradient_audit() {
    use common::gradcheck;
    let start = Instant::now();
    let layers: [(&str, fn(u64) -> f64); 5] = [
        ("gcn", gradcheck::gcn),
        ("innergcn", gradcheck::innergcn),
        ("dense+softmax", gradcheck::dense_softmax),
        ("discriminator", gradcheck::discriminator),
        ("balancer", gradcheck::balancer),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, check) in layers {
        let worst = (0..20).map(check).fold(0.0, f64::max);
        pass &= worst < 1e-4;
        parts.push(format!("{name} {worst:.1e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 60.0;
    assert!(verdict(3, "gradient audit", pass, format!("max rel error over 20 seeds: {}; {secs:.1} s", parts.join(", "))));
}

#[test]
fn criterion_04_lambda_schedule() {
    let k = 300;
    let at0 = lambda_schedule(0, k);
    let after = lambda_schedule(k + 1, k);
    let at100 = lambda_schedule(100, k);
    let pass = at0 == 1.0 && after == 0.0 && (at100 - (-1.0f64).exp()).abs() < 1e-12;
    assert!(verdict(4, "lambda schedule", pass, format!("l(0) = {at0}, l(K+1) = {after}, l(100) = {at100:.15}")));
}

fn cohort(per_class: usize, seed: u64, delta: f64, noise: f64) -> Vec<Subject> {
    let spec = CohortSpec {
        n_per_class: vec![per_class, per_class],
        n_rois: 20,
        n_communities: 4,
        seed,
        noise_sigma: noise,
        planted_edges: PLANTED.iter().map(|&(i, j)| PlantedEdge { i, j, deltas: vec![0.0, delta] }).collect(),
        ..CohortSpec::default()
    };
    make_cohort(&spec).unwrap()
}

const PLANTED: [(usize, usize); 3] = [(0, 7), (3, 12), (5, 17)];

#[test]
fn criterion_05_loss_decomposition() {
    let data = prepare(&cohort(5, 11, 0.6, 0.1)).unwrap();
    let cfg = TrainConfig { n_rois: 20, max_epochs: 3, balancer_cutoff: 2, ..TrainConfig::default() };
    let mut model = BgganModel::new(Architecture::new(&cfg, 8), 0);
    let mut worst: f64 = 0.0;
    let mut batches = 0;
    for epoch in 1..=3 {
        for b in train_epoch(&mut model, &data, &cfg, epoch).unwrap().batches {
            worst = worst.max((b.report.total - b.report.term_sum()).abs());
            batches += 1;
        }
    }
    let pass = worst < 1e-9;
    assert!(verdict(5, "loss decomposition", pass, format!("max |total - sum of terms| {worst:.1e} over {batches} batches")));
}

fn delta_std(curve: &[f64]) -> f64 {
    let d: Vec<f64> = curve.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt()
}

#[test]
fn criterion_06_single_subject_overfit() {
    let start = Instant::now();
    let spec = CohortSpec { n_per_class: vec![1], n_rois: 20, n_communities: 4, seed: 1, ..CohortSpec::default() };
    let data = prepare(&make_cohort(&spec).unwrap()).unwrap();
    let run = |use_balancer: bool| {
        let cfg = TrainConfig {
            n_rois: 20,
            n_classes: 2,
            batch_size: 1,
            max_epochs: 200,
            balancer_cutoff: 200,
            patience: 1000,
            use_balancer,
            ..TrainConfig::default()
        };
        let mut model = BgganModel::new(Architecture::new(&cfg, 8), 0);
        (1..=200).map(|e| train_epoch(&mut model, &data, &cfg, e).unwrap().mean).collect::<Vec<_>>()
    };
    let with = run(true);
    let without = run(false);
    assert!(with.iter().chain(&without).all(|r| r.total.is_finite()));
    let cons = with[199].l_cons / with[0].l_cons;
    let recon = with[199].l_recon / with[0].l_recon;
    let tail = |h: &[bggan::model::LossReport]| delta_std(&h[19..].iter().map(|r| r.l_cons).collect::<Vec<_>>());
    let (s_with, s_without) = (tail(&with), tail(&without));
    let secs = start.elapsed().as_secs_f64();
    let pass = cons < 0.1 && recon < 0.1 && s_with < s_without && secs < 300.0;
    verdict(
        6,
        "overfit convergence",
        pass,
        format!(
            "l_cons at {:.1}% and l_recon at {:.1}% of epoch 1 (need < 10%); delta std {s_with:.6e} with Balancer vs {s_without:.6e} without; {secs:.0} s",
            100.0 * cons,
            100.0 * recon
        ),
    );
}

fn split_by_label(mats: Vec<DMatrix<f64>>, data: &[PreparedSubject]) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let (a, b): (Vec<_>, Vec<_>) = mats.into_iter().zip(data).partition(|(_, p)| p.label == 0);
    (a.into_iter().map(|x| x.0).collect(), b.into_iter().map(|x| x.0).collect())
}

/// Rank (1-based, by ascending p) and p-value of every planted edge.
fn planted_ranks(stats: &[EdgeStat]) -> Vec<(usize, f64)> {
    let mut s = stats.to_vec();
    s.sort_by(|a, b| a.p_value.total_cmp(&b.p_value).then((a.i, a.j).cmp(&(b.i, b.j))));
    PLANTED
        .iter()
        .map(|&(i, j)| {
            let r = s.iter().position(|e| (e.i, e.j) == (i, j)).unwrap();
            (r + 1, s[r].p_value)
        })
        .collect()
}

#[test]
fn criterion_07_planted_difference_recovery() {
    let start = Instant::now();
    let data = prepare(&cohort(30, 0, 0.6, 0.1)).unwrap();
    let (a, b) = split_by_label(data.iter().map(|p| p.sc.clone()).collect(), &data);
    let empirical = planted_ranks(&edge_ttests(&a, &b).unwrap());
    let empirical_ok = empirical.iter().all(|&(r, p)| r <= 5 && p < 0.01);

    // Fixed before looking at generated-matrix results: 300 epochs at a
    // learning rate of 2e-3 for generators and critics, cohort seed 0.
    let epochs = 300;
    let cfg = TrainConfig {
        n_rois: 20,
        max_epochs: epochs,
        balancer_cutoff: epochs,
        patience: epochs,
        lr_gen: 2e-3,
        lr_disc: 2e-3,
        ..TrainConfig::default()
    };
    let mut model = BgganModel::new(Architecture::new(&cfg, 8), 0);
    for e in 1..=epochs {
        train_epoch(&mut model, &data, &cfg, e).unwrap();
    }
    let generated: Vec<DMatrix<f64>> = data.iter().map(|p| infer(&model, p, Direction::Fc2Sc).unwrap()).collect();
    let (a, b) = split_by_label(generated, &data);
    let recovered = planted_ranks(&edge_ttests(&a, &b).unwrap());
    let hits = recovered.iter().filter(|&&(r, _)| r <= 10).count();
    let secs = start.elapsed().as_secs_f64();
    let fmt = |v: &[(usize, f64)]| v.iter().map(|(r, p)| format!("#{r} (p {p:.1e})")).collect::<Vec<_>>().join(", ");
    let pass = empirical_ok && hits >= 2 && secs < 600.0;
    verdict(
        7,
        "planted-difference recovery",
        pass,
        format!(
            "empirical SC ranks {}; generated SC ranks {} ({hits} of 3 in top 10); {secs:.0} s",
            fmt(&empirical),
            fmt(&recovered)
        ),
    );
    assert!(empirical_ok, "empirical ranks {empirical:?}");
}

#[test]
fn criterion_08_classifier_sanity() {
    let data = prepare(&cohort(30, 7, 1.0, 0.05)).unwrap();
    let labels: Vec<usize> = data.iter().map(|p| p.label).collect();
    let (tr, te) = holdout_split(&labels, 0.3, 0).unwrap();
    let train: Vec<PreparedSubject> = tr.iter().map(|&i| data[i].clone()).collect();
    let test: Vec<PreparedSubject> = te.iter().map(|&i| data[i].clone()).collect();
    let epochs = 60;
    let cfg = TrainConfig { n_rois: 20, max_epochs: epochs, balancer_cutoff: epochs, ..TrainConfig::default() };
    let mut model = BgganModel::new(Architecture::new(&cfg, 8), 0);
    for e in 1..=epochs {
        train_epoch(&mut model, &train, &cfg, e).unwrap();
    }
    let eval = evaluate_classifiers(&model, &test).unwrap();
    let acc = |c: bggan::analysis::ConfusionCounts| bggan::analysis::metrics(&c).acc.unwrap();
    let base_cfg = BaselineConfig::default();
    let mut base = GcnBaseline::new(20, 8 * 3, 2, &base_cfg);
    base.train(&train, &base_cfg).unwrap();
    let accs = [
        ("structural", acc(eval.structural)),
        ("functional", acc(eval.functional)),
        ("fused", acc(eval.fused)),
        ("gcn baseline", acc(base.evaluate(&test).unwrap())),
    ];
    let pass = accs[2].1 >= accs[0].1 && accs.iter().all(|(_, a)| *a > 0.9);
    let detail = accs.iter().map(|(n, a)| format!("{n} {a:.3}")).collect::<Vec<_>>().join(", ");
    assert!(verdict(8, "classifier sanity", pass, format!("held-out accuracy on {} subjects: {detail}", test.len())));
}

#[test]
fn criterion_09_pvalues_match_quadrature() {
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for df in 2..=120 {
        for step in 0..=64 {
            let t = -8.0 + 0.25 * step as f64;
            worst = worst.max((t_two_sided_p(t, df as f64) - common::t_pvalue_by_quadrature(t, df as f64)).abs());
            points += 1;
        }
    }
    let pass = worst < 1e-6;
    assert!(verdict(9, "t-test p-values", pass, format!("max deviation {worst:.1e} (< 1e-6) over {points} (t, df) points")));
}

fn bggan_in(root: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_bggan")).current_dir(root).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

/// Every file under `dir` keyed by relative path. The training log's last
/// column is wall-clock time and is dropped.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir).unwrap().display().to_string();
            let mut bytes = fs::read(&path).unwrap();
            if rel.ends_with("loss.csv") {
                let text = String::from_utf8(bytes).unwrap();
                bytes = text.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n").collect::<String>().into_bytes();
            }
            out.insert(rel, bytes);
        }
    }
    out
}

#[test]
fn criterion_10_pipeline_determinism() {
    let spec = "n_per_class = [6, 6]\nn_rois = 12\nn_communities = 3\nseed = 4\n\
                [[planted_edges]]\ni = 2\nj = 9\ndeltas = [0.0, 0.8]\n";
    let roots = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for root in &roots {
        let r = root.path();
        fs::write(r.join("cohort.toml"), spec).unwrap();
        bggan_in(r, &["synth", "--spec", "cohort.toml", "--out", "data"]);
        bggan_in(r, &["train", "--data", "data", "--max-epochs", "5", "--seed", "3", "--out", "run"]);
        bggan_in(r, &["generate", "--checkpoint", "run/model.bggan", "--data", "data", "--direction", "sc2fc", "--out", "gen"]);
        bggan_in(r, &["analyze", "--mode", "ttest", "gen", "--out", "stats"]);
    }
    let (a, b) = (snapshot(roots[0].path()), snapshot(roots[1].path()));
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    let pass = a.len() == b.len() && differing.is_empty() && a.contains_key("run/model.bggan");
    assert!(verdict(
        10,
        "determinism",
        pass,
        format!("{} files compared across two roots, {} differ {:?}", a.len(), differing.len(), differing)
    ));
}
