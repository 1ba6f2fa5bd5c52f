//! The bidirectional model: two extractors with adjacency heads, two
//! classifiers, two critics and two Balancers.
//!
//! Forward routes for one subject with features `X`:
//!
//! ```text
//! SC -> extractor_s -> F'  -> functional head -> FC'
//! FC' -> extractor_f -> F'' -> structural head -> SC''
//! FC -> extractor_f -> ... -> SC' -> extractor_s -> ... -> FC''
//! ```
//!
//! Re-extraction uses the generated matrix as the GCN adjacency and keeps
//! the subject's own spectral basis for the InnerGCN layers.

mod baseline;
pub mod config;
mod eval;
mod extractor;
mod heads;
pub mod schedule;
mod split;
mod train;

use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::TrainConfig;
pub use baseline::{BaselineConfig, GcnBaseline};
pub use eval::{evaluate_classifiers, generation_error, predict, ClassifierEvaluation, GenerationError, Prediction};
pub use split::{holdout_split, stratified_folds, Split};
pub use extractor::{Extractor, ExtractorCache};
pub use heads::{generate_adjacency, generate_backward, Domain};
pub use schedule::{lambda_schedule, remap_lambda};
pub use train::{
    balancer_step, discriminator_step, fit, generator_step, schedule_for, train_batch, train_epoch, BatchOutcome,
    EpochOutcome, EpochRecord, FitSummary, Schedule,
};

use crate::error::{Error, Result};
use crate::nn::discriminator::{matrix_grad, score_matrix};
use crate::nn::{checkpoint, Balancer, Classifier, Discriminator, Param, Parameterized};
use crate::spectral::{normalized_laplacian, spectral_basis, SpectralBasis};
use crate::synth::{Subject, N_MODALITIES};
use crate::tensor::Tensor3;

const CHECKPOINT_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "sc2fc")]
    Sc2Fc,
    #[serde(rename = "fc2sc")]
    Fc2Sc,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc2fc" => Ok(Direction::Sc2Fc),
            "fc2sc" => Ok(Direction::Fc2Sc),
            other => Err(Error::InvalidConfig(format!("direction must be sc2fc or fc2sc, got {other:?}"))),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Sc2Fc => "sc2fc",
            Direction::Fc2Sc => "fc2sc",
        })
    }
}

/// Layer sizes; also the checkpoint header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub n_rois: usize,
    pub feat_dim: usize,
    pub n_modalities: usize,
    pub gcn_hidden: usize,
    pub latent_dim: usize,
    pub inner_layers: usize,
    pub disc_hidden: usize,
    pub classifier_hidden: usize,
    pub balancer_hidden: usize,
    pub n_classes: usize,
}

impl Architecture {
    pub fn new(cfg: &TrainConfig, feat_dim: usize) -> Self {
        Architecture {
            n_rois: cfg.n_rois,
            feat_dim,
            n_modalities: N_MODALITIES,
            gcn_hidden: cfg.gcn_hidden,
            latent_dim: cfg.latent_dim,
            inner_layers: cfg.inner_layers,
            disc_hidden: cfg.disc_hidden,
            classifier_hidden: cfg.classifier_hidden,
            balancer_hidden: cfg.balancer_hidden,
            n_classes: cfg.n_classes,
        }
    }

    fn header(&self) -> Vec<u64> {
        [
            CHECKPOINT_VERSION as usize,
            self.n_rois,
            self.feat_dim,
            self.n_modalities,
            self.gcn_hidden,
            self.latent_dim,
            self.inner_layers,
            self.disc_hidden,
            self.classifier_hidden,
            self.balancer_hidden,
            self.n_classes,
        ]
        .iter()
        .map(|&v| v as u64)
        .collect()
    }

    fn from_header(h: &[u64]) -> Result<Self> {
        if h.len() != 11 || h[0] != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported header {h:?}")));
        }
        let v: Vec<usize> = h.iter().map(|&x| x as usize).collect();
        Ok(Architecture {
            n_rois: v[1],
            feat_dim: v[2],
            n_modalities: v[3],
            gcn_hidden: v[4],
            latent_dim: v[5],
            inner_layers: v[6],
            disc_hidden: v[7],
            classifier_hidden: v[8],
            balancer_hidden: v[9],
            n_classes: v[10],
        })
    }
}

/// A subject with its spectral basis and derived inputs computed once.
#[derive(Clone, Debug)]
pub struct PreparedSubject {
    pub id: String,
    pub label: usize,
    pub sc: DMatrix<f64>,
    pub fc: DMatrix<f64>,
    /// `|FC|` with zero diagonal, the functional-route GCN adjacency.
    pub fc_adj: DMatrix<f64>,
    /// Node features with every column z-scored across regions.
    pub x: Tensor3,
    pub basis: SpectralBasis,
}

/// Z-scores each feature column of each slice across nodes; constant
/// columns become zero.
pub fn standardize_features(x: &Tensor3) -> Tensor3 {
    let (n, d, r) = x.dims();
    let mut out = x.clone();
    for k in 0..r {
        for j in 0..d {
            let col: Vec<f64> = (0..n).map(|i| x.get(i, j, k).re).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            for (i, v) in col.iter().enumerate() {
                let z = if sd > 1e-12 { (v - mean) / sd } else { 0.0 };
                out.set(i, j, k, z.into());
            }
        }
    }
    out
}

impl PreparedSubject {
    pub fn new(s: &Subject) -> Result<Self> {
        let lap = normalized_laplacian(&s.adjacency_tensor(), &Subject::slice_kinds())?;
        let basis = spectral_basis(&lap)?;
        Ok(PreparedSubject {
            id: s.id.clone(),
            label: s.label,
            sc: s.sc.clone(),
            fc: s.fc.clone(),
            fc_adj: crate::nn::discriminator::matrix_graph(&s.fc),
            x: standardize_features(&s.feats),
            basis,
        })
    }

    pub fn n(&self) -> usize {
        self.sc.nrows()
    }

    pub fn real(&self, domain: Domain) -> &DMatrix<f64> {
        match domain {
            Domain::Structural => &self.sc,
            Domain::Functional => &self.fc,
        }
    }
}

pub fn prepare(subjects: &[Subject]) -> Result<Vec<PreparedSubject>> {
    subjects.par_iter().map(PreparedSubject::new).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BgganModel {
    pub arch: Architecture,
    pub extractor_s: Extractor,
    pub extractor_f: Extractor,
    pub classifier_s: Classifier,
    pub classifier_f: Classifier,
    pub disc_s: Discriminator,
    pub disc_f: Discriminator,
    pub balancer_s: Balancer,
    pub balancer_f: Balancer,
}

impl BgganModel {
    pub fn new(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = arch;
        let ext = |rng: &mut ChaCha8Rng| {
            Extractor::new(a.n_rois, a.feat_dim, a.n_modalities, a.gcn_hidden, a.inner_layers, a.latent_dim, rng)
        };
        let extractor_s = ext(&mut rng);
        let extractor_f = ext(&mut rng);
        let n_in = a.n_rois * a.latent_dim;
        let classifier_s = Classifier::new(n_in, a.classifier_hidden, a.n_classes, &mut rng);
        let classifier_f = Classifier::new(n_in, a.classifier_hidden, a.n_classes, &mut rng);
        let disc_s = Discriminator::new(a.n_rois, a.disc_hidden, &mut rng);
        let disc_f = Discriminator::new(a.n_rois, a.disc_hidden, &mut rng);
        let balancer_s = Balancer::new(a.balancer_hidden, &mut rng);
        let balancer_f = Balancer::new(a.balancer_hidden, &mut rng);
        BgganModel {
            arch,
            extractor_s,
            extractor_f,
            classifier_s,
            classifier_f,
            disc_s,
            disc_f,
            balancer_s,
            balancer_f,
        }
    }

    /// Every parameter zero.
    pub fn zeroed(arch: Architecture) -> Self {
        let mut m = BgganModel::new(arch, 0);
        for p in m.all_params_mut() {
            p.value.fill(0.0);
        }
        m
    }

    pub fn generator_params(&self) -> Vec<&Param> {
        let mut v = self.extractor_s.params();
        v.extend(self.extractor_f.params());
        v.extend(self.classifier_s.params());
        v.extend(self.classifier_f.params());
        v
    }

    pub fn generator_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.extractor_s.params_mut();
        v.extend(self.extractor_f.params_mut());
        v.extend(self.classifier_s.params_mut());
        v.extend(self.classifier_f.params_mut());
        v
    }

    pub fn disc_params(&self) -> Vec<&Param> {
        let mut v = self.disc_s.params();
        v.extend(self.disc_f.params());
        v
    }

    pub fn disc_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.disc_s.params_mut();
        v.extend(self.disc_f.params_mut());
        v
    }

    pub fn balancer_params(&self) -> Vec<&Param> {
        let mut v = self.balancer_s.params();
        v.extend(self.balancer_f.params());
        v
    }

    pub fn balancer_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.balancer_s.params_mut();
        v.extend(self.balancer_f.params_mut());
        v
    }

    pub fn all_params(&self) -> Vec<&Param> {
        let mut v = self.generator_params();
        v.extend(self.disc_params());
        v.extend(self.balancer_params());
        v
    }

    pub fn all_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.extractor_s.params_mut();
        v.extend(self.extractor_f.params_mut());
        v.extend(self.classifier_s.params_mut());
        v.extend(self.classifier_f.params_mut());
        v.extend(self.disc_s.params_mut());
        v.extend(self.disc_f.params_mut());
        v.extend(self.balancer_s.params_mut());
        v.extend(self.balancer_f.params_mut());
        v
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let values: Vec<&DMatrix<f64>> = self.all_params().iter().map(|p| &p.value).collect();
        checkpoint::encode(&self.arch.header(), &values)
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, values) = checkpoint::decode(bytes)?;
        let arch = Architecture::from_header(&header)?;
        let mut model = BgganModel::zeroed(arch);
        let params = model.all_params_mut();
        if params.len() != values.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                params.len(),
                values.len()
            )));
        }
        for (i, (p, v)) in params.into_iter().zip(values).enumerate() {
            if p.value.shape() != v.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {i}: expected {:?}, found {:?}",
                    p.value.shape(),
                    v.shape()
                )));
            }
            p.value = v;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::write_atomic(path, &self.to_checkpoint_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        BgganModel::from_checkpoint_bytes(&bytes)
    }

    fn extractor(&self, d: Domain) -> &Extractor {
        match d {
            Domain::Structural => &self.extractor_s,
            Domain::Functional => &self.extractor_f,
        }
    }

    pub fn disc(&self, d: Domain) -> &Discriminator {
        match d {
            Domain::Structural => &self.disc_s,
            Domain::Functional => &self.disc_f,
        }
    }

    fn check_subject(&self, p: &PreparedSubject) -> Result<()> {
        let (n, d, r) = p.x.dims();
        let a = &self.arch;
        if (n, d, r) != (a.n_rois, a.feat_dim, a.n_modalities) {
            return Err(Error::shape(
                "model input",
                format!("{}x{}x{} features", a.n_rois, a.feat_dim, a.n_modalities),
                format!("{n}x{d}x{r} (subject {})", p.id),
            ));
        }
        Ok(())
    }
}

/// Both routes' intermediate values for one subject.
#[derive(Clone, Debug)]
pub struct Translation {
    pub lat_s: DMatrix<f64>,
    cache_s: ExtractorCache,
    /// `FC'`
    pub fc_gen: DMatrix<f64>,
    lat_f2: DMatrix<f64>,
    cache_f2: ExtractorCache,
    /// `SC''`
    pub sc_cycle: DMatrix<f64>,
    pub lat_f: DMatrix<f64>,
    cache_f: ExtractorCache,
    /// `SC'`
    pub sc_gen: DMatrix<f64>,
    lat_s2: DMatrix<f64>,
    cache_s2: ExtractorCache,
    /// `FC''`
    pub fc_cycle: DMatrix<f64>,
}

impl Translation {
    /// The generated matrices judged by each critic.
    pub fn fakes(&self, d: Domain) -> [&DMatrix<f64>; 2] {
        match d {
            Domain::Structural => [&self.sc_gen, &self.sc_cycle],
            Domain::Functional => [&self.fc_gen, &self.fc_cycle],
        }
    }
}

pub fn translate(model: &BgganModel, p: &PreparedSubject) -> Result<Translation> {
    model.check_subject(p)?;
    let (lat_s, cache_s) = model.extractor_s.forward(&p.x, &p.sc, &p.basis)?;
    let fc_gen = generate_adjacency(&lat_s, Domain::Functional)?;
    let (lat_f2, cache_f2) = model
        .extractor_f
        .forward(&p.x, &crate::nn::discriminator::matrix_graph(&fc_gen), &p.basis)?;
    let sc_cycle = generate_adjacency(&lat_f2, Domain::Structural)?;

    let (lat_f, cache_f) = model.extractor_f.forward(&p.x, &p.fc_adj, &p.basis)?;
    let sc_gen = generate_adjacency(&lat_f, Domain::Structural)?;
    let (lat_s2, cache_s2) = model.extractor_s.forward(&p.x, &sc_gen, &p.basis)?;
    let fc_cycle = generate_adjacency(&lat_s2, Domain::Functional)?;
    Ok(Translation {
        lat_s,
        cache_s,
        fc_gen,
        lat_f2,
        cache_f2,
        sc_cycle,
        lat_f,
        cache_f,
        sc_gen,
        lat_s2,
        cache_s2,
        fc_cycle,
    })
}

/// Single deterministic forward pass: `SC -> FC'` or `FC -> SC'`.
pub fn infer(model: &BgganModel, p: &PreparedSubject, direction: Direction) -> Result<DMatrix<f64>> {
    model.check_subject(p)?;
    let (src, adj, target) = match direction {
        Direction::Sc2Fc => (Domain::Structural, &p.sc, Domain::Functional),
        Direction::Fc2Sc => (Domain::Functional, &p.fc_adj, Domain::Structural),
    };
    let (lat, _) = model.extractor(src).forward(&p.x, adj, &p.basis)?;
    generate_adjacency(&lat, target)
}

/// Extractor latent of the source domain for each route.
pub fn source_latent(model: &BgganModel, p: &PreparedSubject, src: Domain) -> Result<DMatrix<f64>> {
    model.check_subject(p)?;
    let adj = match src {
        Domain::Structural => &p.sc,
        Domain::Functional => &p.fc_adj,
    };
    Ok(model.extractor(src).forward(&p.x, adj, &p.basis)?.0)
}

/// Mean squared entrywise difference.
pub fn mse(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm_squared() / a.len() as f64
}

fn mse_grad(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    (a - b) * (2.0 / a.len() as f64)
}

/// Balancer objective `-lambda D(y) + mse(x, y)`.
pub fn balancer_loss(x_real: &DMatrix<f64>, y_balanced: &DMatrix<f64>, disc_score: f64, lambda: f64) -> f64 {
    -lambda * disc_score + mse(x_real, y_balanced)
}

/// Scalar weights of the generator objective for one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Multiplies the cross-route reconstruction term.
    pub recon: f64,
    pub lambda_sc: f64,
    pub lambda_fc: f64,
    pub adv: f64,
}

impl LossWeights {
    pub fn unit() -> Self {
        LossWeights {
            recon: 1.0,
            lambda_sc: 1.0,
            lambda_fc: 1.0,
            adv: 1.0,
        }
    }
}

/// Terms attributed to one translation direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainLosses {
    /// Cross-entropy of the source-domain classifier.
    pub cla: f64,
    /// Weighted construction error of the one-hop output.
    pub cons: f64,
    /// Cycle error of the two-hop output against the source.
    pub inden: f64,
    /// Adversarial terms of both generated matrices this route produces.
    pub gan: f64,
}

impl DomainLosses {
    fn add(&mut self, o: &DomainLosses) {
        self.cla += o.cla;
        self.cons += o.cons;
        self.inden += o.inden;
        self.gan += o.gan;
    }

    fn scale(&mut self, s: f64) {
        self.cla *= s;
        self.cons *= s;
        self.inden *= s;
        self.gan *= s;
    }
}

/// Generator-side losses of one subject (or a batch mean).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleLosses {
    pub sc2fc: DomainLosses,
    pub fc2sc: DomainLosses,
    /// Weighted `mse(E', E'')` summed over domains.
    pub recon: f64,
    /// The same without the schedule weight.
    pub recon_raw: f64,
}

impl SampleLosses {
    pub fn add(&mut self, o: &SampleLosses) {
        self.sc2fc.add(&o.sc2fc);
        self.fc2sc.add(&o.fc2sc);
        self.recon += o.recon;
        self.recon_raw += o.recon_raw;
    }

    pub fn scale(&mut self, s: f64) {
        self.sc2fc.scale(s);
        self.fc2sc.scale(s);
        self.recon *= s;
        self.recon_raw *= s;
    }

    pub fn gan(&self) -> f64 {
        self.sc2fc.gan + self.fc2sc.gan
    }

    pub fn cons(&self) -> f64 {
        self.sc2fc.cons + self.fc2sc.cons
    }

    pub fn inden(&self) -> f64 {
        self.sc2fc.inden + self.fc2sc.inden
    }

    pub fn cla(&self) -> f64 {
        self.sc2fc.cla + self.fc2sc.cla
    }

    pub fn total(&self) -> f64 {
        self.gan() + self.cons() + self.recon + self.inden() + self.cla()
    }
}

/// Per-epoch or per-batch loss decomposition. `total` is the generator
/// objective; the discriminator and Balancer losses optimise other
/// parameters and are reported alongside.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_gan: f64,
    pub l_cons: f64,
    pub l_recon: f64,
    pub l_inden: f64,
    pub l_cla: f64,
    pub l_balancer_s: f64,
    pub l_balancer_f: f64,
    pub l_disc: f64,
    pub total: f64,
    pub recon_raw: f64,
    pub lambda: f64,
}

impl LossReport {
    pub fn term_sum(&self) -> f64 {
        self.l_gan + self.l_cons + self.l_recon + self.l_inden + self.l_cla
    }

    pub const CSV_HEADER: &'static str =
        "l_gan,l_cons,l_recon,l_inden,l_cla,l_balancer_s,l_balancer_f,l_disc,total,recon_raw,lambda";

    pub fn csv_fields(&self) -> String {
        [
            self.l_gan,
            self.l_cons,
            self.l_recon,
            self.l_inden,
            self.l_cla,
            self.l_balancer_s,
            self.l_balancer_f,
            self.l_disc,
            self.total,
            self.recon_raw,
            self.lambda,
        ]
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
    }

    /// First non-finite field, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("l_gan", self.l_gan),
            ("l_cons", self.l_cons),
            ("l_recon", self.l_recon),
            ("l_inden", self.l_inden),
            ("l_cla", self.l_cla),
            ("l_balancer_s", self.l_balancer_s),
            ("l_balancer_f", self.l_balancer_f),
            ("l_disc", self.l_disc),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Seeds the classifier dropout mask of one sample.
pub(crate) fn dropout_seed(seed: u64, epoch: usize, batch: usize, sample: usize) -> u64 {
    let mut h = seed ^ 0xa076_1d64_78bd_642f;
    for v in [epoch as u64, batch as u64, sample as u64] {
        h = (h ^ v).wrapping_mul(0xe703_7ed1_a0b4_28db);
        h ^= h >> 29;
    }
    h
}

/// Generator objective of one subject, optionally with gradients for every
/// generator parameter (in [`BgganModel::generator_params`] order).
pub fn generator_sample(
    model: &BgganModel,
    p: &PreparedSubject,
    tr: &Translation,
    w: &LossWeights,
    dropout: Option<(f64, u64)>,
    with_grads: bool,
) -> Result<(SampleLosses, Option<Vec<DMatrix<f64>>>)> {
    let label = p.label;
    let rate = dropout.map_or(0.0, |d| d.0);
    let mut rng = ChaCha8Rng::seed_from_u64(dropout.map_or(0, |d| d.1));
    let mut classify = |c: &Classifier, lat: &DMatrix<f64>| {
        if rate > 0.0 {
            c.forward(lat, Some((rate, &mut rng)))
        } else {
            c.forward::<ChaCha8Rng>(lat, None)
        }
    };
    let cls_s = classify(&model.classifier_s, &tr.lat_s)?;
    let cls_f = classify(&model.classifier_f, &tr.lat_f)?;

    let mut out = SampleLosses::default();
    out.sc2fc.cla = crate::nn::cross_entropy(&cls_s.probs, label)?;
    out.fc2sc.cla = crate::nn::cross_entropy(&cls_f.probs, label)?;
    out.sc2fc.cons = w.lambda_fc * mse(&tr.fc_gen, &p.fc);
    out.fc2sc.cons = w.lambda_sc * mse(&tr.sc_gen, &p.sc);
    out.sc2fc.inden = mse(&tr.sc_cycle, &p.sc);
    out.fc2sc.inden = mse(&tr.fc_cycle, &p.fc);
    let raw_f = mse(&tr.fc_gen, &tr.fc_cycle);
    let raw_s = mse(&tr.sc_gen, &tr.sc_cycle);
    out.recon_raw = raw_f + raw_s;
    out.recon = w.recon * (w.lambda_fc * raw_f + w.lambda_sc * raw_s);

    // adversarial terms (D(x) - 1)^2 per generated matrix
    let adv = |d: &Discriminator, m: &DMatrix<f64>| -> Result<(f64, Option<DMatrix<f64>>)> {
        let c = score_matrix(d, m)?;
        let loss = w.adv * (c.score - 1.0).powi(2);
        let grad = if with_grads && w.adv != 0.0 {
            let g = d.backward(&c, 2.0 * w.adv * (c.score - 1.0))?;
            Some(matrix_grad(m, &g))
        } else {
            None
        };
        Ok((loss, grad))
    };
    let (gan_fgen, g_fgen) = adv(&model.disc_f, &tr.fc_gen)?;
    let (gan_scyc, g_scyc) = adv(&model.disc_s, &tr.sc_cycle)?;
    let (gan_sgen, g_sgen) = adv(&model.disc_s, &tr.sc_gen)?;
    let (gan_fcyc, g_fcyc) = adv(&model.disc_f, &tr.fc_cycle)?;
    out.sc2fc.gan = gan_fgen + gan_scyc;
    out.fc2sc.gan = gan_sgen + gan_fcyc;

    if !with_grads {
        return Ok((out, None));
    }

    let add = |acc: &mut DMatrix<f64>, g: Option<DMatrix<f64>>| {
        if let Some(g) = g {
            *acc += g;
        }
    };
    let wf = w.lambda_fc;
    let ws = w.lambda_sc;
    let mut d_fgen = mse_grad(&tr.fc_gen, &p.fc) * wf + mse_grad(&tr.fc_gen, &tr.fc_cycle) * (w.recon * wf);
    add(&mut d_fgen, g_fgen);
    let mut d_fcyc = mse_grad(&tr.fc_cycle, &p.fc) + mse_grad(&tr.fc_cycle, &tr.fc_gen) * (w.recon * wf);
    add(&mut d_fcyc, g_fcyc);
    let mut d_sgen = mse_grad(&tr.sc_gen, &p.sc) * ws + mse_grad(&tr.sc_gen, &tr.sc_cycle) * (w.recon * ws);
    add(&mut d_sgen, g_sgen);
    let mut d_scyc = mse_grad(&tr.sc_cycle, &p.sc) + mse_grad(&tr.sc_cycle, &tr.sc_gen) * (w.recon * ws);
    add(&mut d_scyc, g_scyc);

    let ext_s = &model.extractor_s;
    let ext_f = &model.extractor_f;
    let n = p.n();

    // SC -> FC' -> SC'': SC'' first, since it feeds back into FC'
    let g_lat_f2 = generate_backward(&tr.lat_f2, Domain::Structural, &d_scyc);
    let (g_ext_f_b, g_adj_b) = ext_f.backward(&tr.cache_f2, &p.basis, &g_lat_f2)?;
    d_fgen += DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            crate::nn::discriminator::sign(tr.fc_gen[(i, j)]) * g_adj_b[(i, j)]
        }
    });
    let (g_cls_s, g_lat_cls_s) = model.classifier_s.backward(&cls_s, label, tr.lat_s.shape())?;
    let g_lat_s = generate_backward(&tr.lat_s, Domain::Functional, &d_fgen) + g_lat_cls_s;
    let (g_ext_s_a, _) = ext_s.backward(&tr.cache_s, &p.basis, &g_lat_s)?;

    // FC -> SC' -> FC''
    let g_lat_s2 = generate_backward(&tr.lat_s2, Domain::Functional, &d_fcyc);
    let (g_ext_s_d, g_adj_d) = ext_s.backward(&tr.cache_s2, &p.basis, &g_lat_s2)?;
    let mut g_adj_d = g_adj_d;
    g_adj_d.fill_diagonal(0.0);
    d_sgen += g_adj_d;
    let (g_cls_f, g_lat_cls_f) = model.classifier_f.backward(&cls_f, label, tr.lat_f.shape())?;
    let g_lat_f = generate_backward(&tr.lat_f, Domain::Structural, &d_sgen) + g_lat_cls_f;
    let (g_ext_f_c, _) = ext_f.backward(&tr.cache_f, &p.basis, &g_lat_f)?;

    let mut grads: Vec<DMatrix<f64>> = g_ext_s_a.into_iter().zip(g_ext_s_d).map(|(a, b)| a + b).collect();
    grads.extend(g_ext_f_b.into_iter().zip(g_ext_f_c).map(|(a, b)| a + b));
    grads.extend(g_cls_s);
    grads.extend(g_cls_f);
    Ok((out, Some(grads)))
}

/// Batch-mean direction losses for a frozen model (dropout off).
pub fn domain_losses(
    model: &BgganModel,
    batch: &[PreparedSubject],
    direction: Direction,
    w: &LossWeights,
) -> Result<DomainLosses> {
    let all = objective(model, batch, w)?;
    Ok(match direction {
        Direction::Sc2Fc => all.sc2fc,
        Direction::Fc2Sc => all.fc2sc,
    })
}

/// Batch-mean generator objective for a frozen model (dropout off).
pub fn objective(model: &BgganModel, batch: &[PreparedSubject], w: &LossWeights) -> Result<SampleLosses> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let parts = batch
        .par_iter()
        .map(|p| {
            let tr = translate(model, p)?;
            Ok(generator_sample(model, p, &tr, w, None, false)?.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sum = SampleLosses::default();
    for s in &parts {
        sum.add(s);
    }
    sum.scale(1.0 / batch.len() as f64);
    Ok(sum)
}
