mod common;

use bggan::model::{
    balancer_loss, domain_losses, generator_sample, infer, objective, prepare, schedule_for, train_epoch, translate,
    Architecture, BgganModel, Direction, Domain, LossWeights, PreparedSubject, TrainConfig,
};
use bggan::nn::discriminator::{matrix_graph, score_matrix};
use bggan::nn::{cross_entropy, Param};
use bggan::synth::{make_cohort, CohortSpec, PlantedEdge};
use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;

fn tiny_config(n: usize) -> TrainConfig {
    TrainConfig {
        n_rois: n,
        gcn_hidden: 3,
        latent_dim: 3,
        inner_layers: 2,
        disc_hidden: 3,
        classifier_hidden: 5,
        balancer_hidden: 2,
        batch_size: 2,
        max_epochs: 20,
        balancer_cutoff: 5,
        ..TrainConfig::default()
    }
}

fn tiny_data(n: usize, per_class: usize, seed: u64) -> Vec<PreparedSubject> {
    let spec = CohortSpec {
        n_per_class: vec![per_class, per_class],
        n_rois: n,
        n_communities: 2,
        feat_dim: 4,
        diffusion_steps: 60,
        planted_edges: vec![PlantedEdge { i: 0, j: 1, deltas: vec![0.0, 0.6] }],
        seed,
        ..CohortSpec::default()
    };
    prepare(&make_cohort(&spec).unwrap()).unwrap()
}

fn tiny_model(n: usize, seed: u64) -> (BgganModel, TrainConfig) {
    let cfg = tiny_config(n);
    (BgganModel::new(Architecture::new(&cfg, 4), seed), cfg)
}

fn mse(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn generator_values(m: &BgganModel) -> Vec<DMatrix<f64>> {
    m.generator_params().iter().map(|p| p.value.clone()).collect()
}

fn values(ps: Vec<&Param>) -> Vec<DMatrix<f64>> {
    ps.iter().map(|p| p.value.clone()).collect()
}

#[test]
fn full_generator_gradient_matches_finite_differences() {
    let data = tiny_data(6, 1, 3);
    let weights = LossWeights {
        recon: 0.7,
        lambda_sc: 1.2,
        lambda_fc: 0.8,
        adv: 0.3,
    };
    for seed in 0..3 {
        let (model, _) = tiny_model(6, seed);
        let p = &data[(seed as usize) % data.len()];
        let tr = translate(&model, p).unwrap();
        let (_, grads) = generator_sample(&model, p, &tr, &weights, None, true).unwrap();
        let grads = grads.unwrap();
        let loss = |m: &BgganModel| {
            let tr = translate(m, p).unwrap();
            generator_sample(m, p, &tr, &weights, None, false).unwrap().0.total()
        };
        let mut worst = 0.0f64;
        let (mut kinks, mut total) = (0usize, 0usize);
        let n_params = model.generator_params().len();
        assert_eq!(grads.len(), n_params);
        let h = common::FD_STEP;
        let f0 = loss(&model);
        for k in 0..n_params {
            for idx in 0..grads[k].len() {
                let shifted = |d: f64| {
                    let mut m = model.clone();
                    m.generator_params_mut()[k].value[idx] += d;
                    loss(&m)
                };
                let (up, down) = (shifted(h), shifted(-h));
                total += 1;
                // relu and clamp boundaries within one step make the
                // one-sided slopes disagree; such entries have no gradient
                // to check against
                let (right, left) = ((up - f0) / h, (f0 - down) / h);
                if (right - left).abs() > 1e-3 * right.abs().max(left.abs()).max(1e-3) {
                    kinks += 1;
                    continue;
                }
                let numeric = (up - down) / (2.0 * h);
                let a = grads[k][idx];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            }
        }
        assert!(kinks * 50 < total, "seed {seed}: {kinks} of {total} entries sit on kinks");
        assert!(worst < 1e-4, "seed {seed}: max relative error {worst:e}");
    }
}

#[test]
fn domain_losses_match_scripted_recomputation() {
    let data = tiny_data(6, 1, 4);
    let (model, _) = tiny_model(6, 9);
    let w = LossWeights {
        recon: 0.4,
        lambda_sc: 1.5,
        lambda_fc: 0.5,
        adv: 0.2,
    };
    let mut sc2fc = 0.0;
    let mut fc2sc = 0.0;
    let mut recon = 0.0;
    for p in &data {
        let ls = model.extractor_s.forward(&p.x, &p.sc, &p.basis).unwrap().0;
        let f1 = bggan::model::generate_adjacency(&ls, Domain::Functional).unwrap();
        let lf2 = model.extractor_f.forward(&p.x, &matrix_graph(&f1), &p.basis).unwrap().0;
        let s2 = bggan::model::generate_adjacency(&lf2, Domain::Structural).unwrap();
        let lf = model.extractor_f.forward(&p.x, &matrix_graph(&p.fc), &p.basis).unwrap().0;
        let s1 = bggan::model::generate_adjacency(&lf, Domain::Structural).unwrap();
        let ls2 = model.extractor_s.forward(&p.x, &s1, &p.basis).unwrap().0;
        let f2 = bggan::model::generate_adjacency(&ls2, Domain::Functional).unwrap();
        let d = |disc, m: &DMatrix<f64>| (score_matrix(disc, m).unwrap().score - 1.0).powi(2);
        let ce = |c: &bggan::nn::Classifier, l: &DMatrix<f64>| {
            cross_entropy(&c.forward::<ChaCha8Rng>(l, None).unwrap().probs, p.label).unwrap()
        };
        sc2fc += ce(&model.classifier_s, &ls)
            + w.lambda_fc * mse(&f1, &p.fc)
            + mse(&s2, &p.sc)
            + w.adv * (d(&model.disc_f, &f1) + d(&model.disc_s, &s2));
        fc2sc += ce(&model.classifier_f, &lf)
            + w.lambda_sc * mse(&s1, &p.sc)
            + mse(&f2, &p.fc)
            + w.adv * (d(&model.disc_s, &s1) + d(&model.disc_f, &f2));
        recon += w.recon * (w.lambda_fc * mse(&f1, &f2) + w.lambda_sc * mse(&s1, &s2));
    }
    let b = data.len() as f64;
    let got_a = domain_losses(&model, &data, Direction::Sc2Fc, &w).unwrap();
    let got_b = domain_losses(&model, &data, Direction::Fc2Sc, &w).unwrap();
    let sum = |d: bggan::model::DomainLosses| d.cla + d.cons + d.inden + d.gan;
    assert!((sum(got_a) - sc2fc / b).abs() < 1e-12);
    assert!((sum(got_b) - fc2sc / b).abs() < 1e-12);
    let all = objective(&model, &data, &w).unwrap();
    assert!((all.total() - (sc2fc + fc2sc + recon) / b).abs() < 1e-12);
}

#[test]
fn identical_generation_zeroes_mse_terms() {
    let a = DMatrix::from_fn(4, 4, |i, j| (i + j) as f64);
    assert_eq!(mse(&a, &a), 0.0);
    let c = 0.3;
    assert!((bggan::model::mse(&a, &a.add_scalar(c)) - c * c).abs() < 1e-15);
}

#[test]
fn balancer_loss_by_hand() {
    let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    assert_eq!(balancer_loss(&x, &x, 0.0, 0.8), 0.0);
    let y = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
    // mse = 2 * 0.25 / 4 = 0.125; -0.5 * 0.6 = -0.3
    assert!((balancer_loss(&x, &y, 0.6, 0.5) - (-0.175)).abs() < 1e-15);
    assert_eq!(balancer_loss(&x, &y, 123.0, 0.0), 0.125);
}

#[test]
fn training_is_reproducible_and_decomposes() {
    let data = tiny_data(6, 2, 5);
    let run = || {
        let (mut m, cfg) = tiny_model(6, 1);
        let mut reports = Vec::new();
        for epoch in 1..=2 {
            let out = train_epoch(&mut m, &data, &cfg, epoch).unwrap();
            for b in &out.batches {
                assert!((b.report.total - b.report.term_sum()).abs() < 1e-9);
            }
            reports.push(out.mean);
        }
        (m, reports)
    };
    let (m1, r1) = run();
    let (m2, r2) = run();
    assert_eq!(r1, r2);
    assert_eq!(m1, m2);
    assert!(r1.iter().all(|r| r.total.is_finite()));
}

#[test]
fn zero_initialised_model_trains_finitely() {
    let data = tiny_data(6, 1, 6);
    let cfg = tiny_config(6);
    let mut m = BgganModel::zeroed(Architecture::new(&cfg, 4));
    let out = train_epoch(&mut m, &data, &cfg, 1).unwrap();
    assert!(out.mean.total.is_finite());
}

#[test]
fn balancer_bypassed_after_cutoff() {
    let data = tiny_data(6, 1, 7);
    let (mut m, cfg) = tiny_model(6, 2);
    assert!(schedule_for(&cfg, cfg.balancer_cutoff).balancer_active);
    let before = train_epoch(&mut m, &data, &cfg, cfg.balancer_cutoff).unwrap();
    assert!(before.batches.iter().all(|b| b.real_digest != b.raw_digest));
    let bal = values(m.balancer_params());
    let after = train_epoch(&mut m, &data, &cfg, cfg.balancer_cutoff + 1).unwrap();
    for b in &after.batches {
        assert_eq!(b.real_digest, b.raw_digest);
        assert_eq!(b.report.l_balancer_s, 0.0);
        assert_eq!(b.report.lambda, 0.0);
    }
    assert_eq!(values(m.balancer_params()), bal);
}

#[test]
fn optimiser_steps_touch_only_their_partition() {
    let data = tiny_data(6, 1, 8);
    let (mut m, cfg) = tiny_model(6, 3);
    let batch: Vec<&PreparedSubject> = data.iter().collect();
    let trs: Vec<_> = batch.iter().map(|p| translate(&m, p).unwrap()).collect();
    let sched = schedule_for(&cfg, 1);

    let (g0, b0, d0) = (generator_values(&m), values(m.balancer_params()), values(m.disc_params()));
    bggan::model::discriminator_step(&mut m, &cfg, &batch, &trs, &sched).unwrap();
    assert_eq!(generator_values(&m), g0);
    assert_eq!(values(m.balancer_params()), b0);
    assert_ne!(values(m.disc_params()), d0);

    let d1 = values(m.disc_params());
    bggan::model::balancer_step(&mut m, &cfg, &batch, &sched).unwrap();
    assert_eq!(generator_values(&m), g0);
    assert_eq!(values(m.disc_params()), d1);
    assert_ne!(values(m.balancer_params()), b0);

    let b1 = values(m.balancer_params());
    bggan::model::generator_step(&mut m, &cfg, &batch, &[0, 1], &trs, &sched, 1, 0).unwrap();
    assert_eq!(values(m.disc_params()), d1);
    assert_eq!(values(m.balancer_params()), b1);
    assert_ne!(generator_values(&m), g0);
}

#[test]
fn inference_contract() {
    let data = tiny_data(6, 1, 10);
    let (m, cfg) = tiny_model(6, 4);
    for p in &data {
        let f = infer(&m, p, Direction::Sc2Fc).unwrap();
        assert_eq!(f, infer(&m, p, Direction::Sc2Fc).unwrap());
        assert_eq!(f, f.transpose());
        assert!(f.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(f.diagonal().iter().all(|&v| v == 1.0));
        let s = infer(&m, p, Direction::Fc2Sc).unwrap();
        assert_eq!(s, s.transpose());
        assert!(s.iter().all(|&v| v >= 0.0));
        assert!(s.diagonal().iter().all(|&v| v == 0.0));
    }
    let zero = BgganModel::zeroed(Architecture::new(&cfg, 4));
    assert_eq!(infer(&zero, &data[0], Direction::Fc2Sc).unwrap(), DMatrix::zeros(6, 6));
    let wrong = tiny_data(5, 1, 10);
    assert!(infer(&m, &wrong[0], Direction::Sc2Fc).is_err());
}

#[test]
fn checkpoint_roundtrip() {
    let (m, _) = tiny_model(6, 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    m.save(&path).unwrap();
    let back = BgganModel::load(&path).unwrap();
    assert_eq!(values(back.all_params()), values(m.all_params()));
    assert_eq!(back.arch, m.arch);
    let bytes = std::fs::read(&path).unwrap();
    assert!(BgganModel::from_checkpoint_bytes(&bytes[..bytes.len() - 8]).is_err());
    assert!(BgganModel::load(&dir.path().join("absent.ckpt")).is_err());
}
