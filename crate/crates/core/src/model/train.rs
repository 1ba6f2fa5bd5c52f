//! Alternating optimisation: critics, then Balancers, then generators and
//! classifiers, once per batch.
//!
//! Per-sample work runs in parallel; results are collected in sample order
//! and reduced sequentially, so the outcome does not depend on the number of
//! worker threads.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    balancer_loss, dropout_seed, generator_sample, lambda_schedule, mse_grad, remap_lambda, translate,
    BgganModel, Domain, LossReport, LossWeights, PreparedSubject, SampleLosses, Translation,
};
use crate::error::{Error, Result};
use crate::nn::discriminator::{matrix_grad, score_matrix};
use crate::nn::{adam_step, AdamConfig, Param};
use crate::spectral::fnv1a;

/// Schedule-derived weights of one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Raw decay value `exp(-0.01 t)` (zero after the cutoff).
    pub lambda: f64,
    pub recon_weight: f64,
    pub balancer_weight: f64,
    pub balancer_active: bool,
}

pub fn schedule_for(cfg: &crate::model::TrainConfig, epoch: usize) -> Schedule {
    let lambda = lambda_schedule(epoch, cfg.balancer_cutoff);
    let lam_b = if cfg.lambda_remap { remap_lambda(lambda) } else { lambda };
    Schedule {
        lambda,
        recon_weight: cfg.lambda_recon.unwrap_or(lambda),
        balancer_weight: cfg.lambda_balancer.unwrap_or(lam_b),
        balancer_active: cfg.use_balancer && lambda > 0.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchOutcome {
    pub report: LossReport,
    /// Digest of every matrix the critics saw as real.
    pub real_digest: u64,
    /// Digest of the raw SC/FC matrices of the batch, in the same order.
    pub raw_digest: u64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochOutcome {
    pub epoch: usize,
    /// Sample-weighted mean over batches.
    pub mean: LossReport,
    pub batches: Vec<BatchOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub report: LossReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitSummary {
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
    pub best_cons: f64,
}

fn digest(mats: &[&DMatrix<f64>]) -> u64 {
    fnv1a(mats.iter().flat_map(|m| m.iter().map(|v| v.to_bits())))
}

fn mean_grads(parts: Vec<Vec<DMatrix<f64>>>) -> Vec<DMatrix<f64>> {
    let count = parts.len() as f64;
    let mut iter = parts.into_iter();
    let mut acc = iter.next().expect("non-empty batch");
    for g in iter {
        for (a, b) in acc.iter_mut().zip(g) {
            *a += b;
        }
    }
    for a in &mut acc {
        *a /= count;
    }
    acc
}

fn apply_adam(params: Vec<&mut Param>, grads: Vec<DMatrix<f64>>, lr: f64) {
    for (p, g) in params.into_iter().zip(grads) {
        p.grad = g;
        adam_step(p, lr, AdamConfig::default());
    }
}

/// Real input of a critic: the Balancer blend while active, else raw data.
fn critic_real(model: &BgganModel, p: &PreparedSubject, d: Domain, active: bool) -> Result<DMatrix<f64>> {
    if !active {
        return Ok(p.real(d).clone());
    }
    let (bal, other) = match d {
        Domain::Structural => (&model.balancer_s, &p.fc),
        Domain::Functional => (&model.balancer_f, &p.sc),
    };
    Ok(bal.forward(p.real(d), other)?.0)
}

/// LSGAN critic update. Returns the batch-mean critic loss and the real
/// matrices it consumed.
pub fn discriminator_step(
    model: &mut BgganModel,
    cfg: &crate::model::TrainConfig,
    batch: &[&PreparedSubject],
    trs: &[Translation],
    sched: &Schedule,
) -> Result<(f64, Vec<DMatrix<f64>>)> {
    let m = &*model;
    let parts = batch
        .par_iter()
        .zip(trs)
        .map(|(p, tr)| {
            let mut loss = 0.0;
            let mut grads = Vec::new();
            let mut reals = Vec::new();
            for d in [Domain::Structural, Domain::Functional] {
                let disc = m.disc(d);
                let real = critic_real(m, p, d, sched.balancer_active)?;
                let c = score_matrix(disc, &real)?;
                loss += (c.score - 1.0).powi(2);
                let mut g = disc.backward(&c, 2.0 * (c.score - 1.0))?.params;
                for fake in tr.fakes(d) {
                    let cf = score_matrix(disc, fake)?;
                    loss += 0.5 * cf.score * cf.score;
                    for (a, b) in g.iter_mut().zip(disc.backward(&cf, cf.score)?.params) {
                        *a += b;
                    }
                }
                grads.extend(g);
                reals.push(real);
            }
            Ok((loss, grads, reals))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut reals = Vec::new();
    let mut grads = Vec::new();
    for (l, g, r) in parts {
        loss += l;
        grads.push(g);
        reals.extend(r);
    }
    apply_adam(model.disc_params_mut(), mean_grads(grads), cfg.lr_disc);
    Ok((loss / batch.len() as f64, reals))
}

/// Balancer update against the current critics. Returns the batch-mean
/// structural and functional Balancer losses.
pub fn balancer_step(
    model: &mut BgganModel,
    cfg: &crate::model::TrainConfig,
    batch: &[&PreparedSubject],
    sched: &Schedule,
) -> Result<(f64, f64)> {
    let lam = sched.balancer_weight;
    let m = &*model;
    let parts = batch
        .par_iter()
        .map(|p| {
            let mut losses = [0.0; 2];
            let mut grads = Vec::new();
            for (slot, d) in [Domain::Structural, Domain::Functional].into_iter().enumerate() {
                let (bal, other) = match d {
                    Domain::Structural => (&m.balancer_s, &p.fc),
                    Domain::Functional => (&m.balancer_f, &p.sc),
                };
                let x = p.real(d);
                let (y, cache) = bal.forward(x, other)?;
                let c = score_matrix(m.disc(d), &y)?;
                losses[slot] = balancer_loss(x, &y, c.score, lam);
                let g_adv = matrix_grad(&y, &m.disc(d).backward(&c, 1.0)?);
                let g_y = mse_grad(&y, x) - g_adv * lam;
                grads.extend(bal.backward(&cache, &g_y)?.params);
            }
            Ok((losses, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let b = batch.len() as f64;
    let ls = parts.iter().map(|(l, _)| l[0]).sum::<f64>() / b;
    let lf = parts.iter().map(|(l, _)| l[1]).sum::<f64>() / b;
    let grads = mean_grads(parts.into_iter().map(|(_, g)| g).collect());
    apply_adam(model.balancer_params_mut(), grads, cfg.lr_balancer);
    Ok((ls, lf))
}

/// Generator and classifier update on the full objective. `trs` must have
/// been computed with the current generator parameters.
pub fn generator_step(
    model: &mut BgganModel,
    cfg: &crate::model::TrainConfig,
    batch: &[&PreparedSubject],
    sample_ids: &[usize],
    trs: &[Translation],
    sched: &Schedule,
    epoch: usize,
    batch_no: usize,
) -> Result<(SampleLosses, f64)> {
    let w = LossWeights {
        recon: sched.recon_weight,
        lambda_sc: cfg.lambda_sc,
        lambda_fc: cfg.lambda_fc,
        adv: cfg.adv_weight,
    };
    let m = &*model;
    let parts = batch
        .par_iter()
        .zip(trs)
        .zip(sample_ids)
        .map(|((p, tr), &sid)| {
            let drop = (cfg.dropout > 0.0).then(|| (cfg.dropout, dropout_seed(cfg.seed, epoch, batch_no, sid)));
            let (l, g) = generator_sample(m, p, tr, &w, drop, true)?;
            Ok((l, g.expect("gradients requested")))
        })
        .collect::<Result<Vec<_>>>()?;
    let b = batch.len() as f64;
    let mut losses = SampleLosses::default();
    let mut total = 0.0;
    for (l, _) in &parts {
        losses.add(l);
        total += l.total();
    }
    losses.scale(1.0 / b);
    let grads = mean_grads(parts.into_iter().map(|(_, g)| g).collect());
    apply_adam(model.generator_params_mut(), grads, cfg.lr_gen);
    Ok((losses, total / b))
}

/// One optimisation round on the subjects `ids` of `data`.
pub fn train_batch(
    model: &mut BgganModel,
    cfg: &crate::model::TrainConfig,
    data: &[PreparedSubject],
    ids: &[usize],
    epoch: usize,
    batch_no: usize,
) -> Result<BatchOutcome> {
    let batch: Vec<&PreparedSubject> = ids.iter().map(|&i| &data[i]).collect();
    let sched = schedule_for(cfg, epoch);
    let trs = batch
        .par_iter()
        .map(|p| translate(model, p))
        .collect::<Result<Vec<_>>>()?;

    let (l_disc, reals) = discriminator_step(model, cfg, &batch, &trs, &sched)?;
    let raws: Vec<&DMatrix<f64>> = batch.iter().flat_map(|p| [&p.sc, &p.fc]).collect();
    let real_digest = digest(&reals.iter().collect::<Vec<_>>());
    let raw_digest = digest(&raws);

    let (l_bs, l_bf) = if sched.balancer_active {
        balancer_step(model, cfg, &batch, &sched)?
    } else {
        (0.0, 0.0)
    };
    let (losses, total) = generator_step(model, cfg, &batch, ids, &trs, &sched, epoch, batch_no)?;
    let report = LossReport {
        l_gan: losses.gan(),
        l_cons: losses.cons(),
        l_recon: losses.recon,
        l_inden: losses.inden(),
        l_cla: losses.cla(),
        l_balancer_s: l_bs,
        l_balancer_f: l_bf,
        l_disc,
        total,
        recon_raw: losses.recon_raw,
        lambda: sched.lambda,
    };
    if let Some(term) = report.non_finite_term().or((!total.is_finite()).then_some("total")) {
        return Err(Error::NonFinite {
            term,
            epoch,
            batch: batch_no,
        });
    }
    Ok(BatchOutcome {
        report,
        real_digest,
        raw_digest,
        size: ids.len(),
    })
}

fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    order.shuffle(&mut rng);
    order
}

fn weighted_mean(batches: &[BatchOutcome]) -> LossReport {
    let n: usize = batches.iter().map(|b| b.size).sum();
    let mut m = LossReport::default();
    for b in batches {
        let w = b.size as f64 / n as f64;
        let r = &b.report;
        m.l_gan += w * r.l_gan;
        m.l_cons += w * r.l_cons;
        m.l_recon += w * r.l_recon;
        m.l_inden += w * r.l_inden;
        m.l_cla += w * r.l_cla;
        m.l_balancer_s += w * r.l_balancer_s;
        m.l_balancer_f += w * r.l_balancer_f;
        m.l_disc += w * r.l_disc;
        m.total += w * r.total;
        m.recon_raw += w * r.recon_raw;
    }
    m.lambda = batches.first().map_or(0.0, |b| b.report.lambda);
    m
}

/// One pass over `data` in a seeded shuffled order. `epoch` is 1-based and
/// drives the decay schedule.
pub fn train_epoch(
    model: &mut BgganModel,
    data: &[PreparedSubject],
    cfg: &crate::model::TrainConfig,
    epoch: usize,
) -> Result<EpochOutcome> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let order = epoch_order(cfg.seed, epoch, data.len());
    let batches = order
        .chunks(cfg.batch_size)
        .enumerate()
        .map(|(b, ids)| train_batch(model, cfg, data, ids, epoch, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(EpochOutcome {
        epoch,
        mean: weighted_mean(&batches),
        batches,
    })
}

/// Trains up to `max_epochs`, stopping early once the epoch-mean `l_cons`
/// has not improved by `min_delta` for `patience` epochs.
pub fn fit(
    model: &mut BgganModel,
    data: &[PreparedSubject],
    cfg: &crate::model::TrainConfig,
    mut on_epoch: impl FnMut(&EpochOutcome, &BgganModel) -> Result<()>,
) -> Result<FitSummary> {
    cfg.validate()?;
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let out = train_epoch(model, data, cfg, epoch)?;
        on_epoch(&out, model)?;
        let cons = out.mean.l_cons;
        history.push(EpochRecord {
            epoch,
            report: out.mean,
        });
        if cons < best - cfg.min_delta {
            best = cons;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(FitSummary {
        history,
        stopped_early,
        best_cons: best,
    })
}
