//! Synthetic multimodal cohorts.
//!
//! Structural connectomes are community-structured weighted graphs with
//! class-specific planted edge shifts. Functional connectomes are Pearson
//! correlations of node time series from a linear diffusion process running
//! on the structural graph, so structure constrains function. The process
//! innovations come from a cohort-wide stream; only the optional observation
//! noise is subject-specific, which keeps FC a deterministic function of SC
//! when `noise_sigma` is zero.

mod io;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{
    load_cohort, matrix_to_csv, read_manifest, read_matrix, save_cohort, write_matrix, Manifest, ManifestEntry,
    MANIFEST_FILE, SCHEMA_VERSION,
};

use crate::error::{Error, Result};
use crate::spectral::SliceKind;
use crate::tensor::Tensor3;

/// Number of modality slices (structural, functional, structure-weighted
/// functional).
pub const N_MODALITIES: usize = 3;
/// Row statistics available per modality slice.
pub const MAX_FEATURES: usize = 8;

/// One labeled sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub id: String,
    pub label: usize,
    /// Symmetric, nonnegative, zero diagonal.
    pub sc: DMatrix<f64>,
    /// Symmetric, entries in `[-1, 1]`, unit diagonal.
    pub fc: DMatrix<f64>,
    /// `n x feat_dim x 3` row statistics.
    pub feats: Tensor3,
}

impl Subject {
    pub fn n(&self) -> usize {
        self.sc.nrows()
    }

    /// Adjacency slices: SC, `|FC|` (zero diagonal), `SC * |FC|`.
    pub fn adjacency_slices(&self) -> Vec<DMatrix<f64>> {
        modality_slices(&self.sc, &self.fc)
    }

    pub fn adjacency_tensor(&self) -> Tensor3 {
        Tensor3::from_real_slices(&self.adjacency_slices()).expect("square slices")
    }

    pub fn slice_kinds() -> [SliceKind; N_MODALITIES] {
        [SliceKind::Structural, SliceKind::Functional, SliceKind::Structural]
    }

    /// Checks every matrix invariant, naming the first one violated.
    pub fn validate(&self, n_rois: usize) -> Result<()> {
        let fail = |invariant: &'static str, detail: String| {
            Err(Error::InvariantViolation {
                subject: self.id.clone(),
                invariant,
                detail,
            })
        };
        if self.sc.shape() != (n_rois, n_rois) || self.fc.shape() != (n_rois, n_rois) {
            return fail(
                "shape",
                format!("expected {n_rois}x{n_rois}, got sc {:?} fc {:?}", self.sc.shape(), self.fc.shape()),
            );
        }
        let (fn_, _, fr) = self.feats.dims();
        if fn_ != n_rois || fr != N_MODALITIES || !self.feats.is_real() {
            return fail("shape", format!("feature tensor must be real {n_rois}xDx{N_MODALITIES}"));
        }
        for (name, m) in [("sc", &self.sc), ("fc", &self.fc)] {
            if m.iter().any(|x| !x.is_finite()) {
                return fail("finite", format!("{name} has a non-finite entry"));
            }
            let dev = (m - m.transpose()).amax();
            if dev > 1e-9 {
                return fail("symmetry", format!("{name} max |M - M^T| = {dev:e}"));
            }
        }
        if let Some(v) = self.sc.iter().find(|&&x| x < 0.0) {
            return fail("sc_nonnegative", format!("sc entry {v}"));
        }
        if let Some(v) = self.sc.diagonal().iter().find(|x| x.abs() > 1e-12) {
            return fail("sc_zero_diagonal", format!("sc diagonal entry {v}"));
        }
        if let Some(v) = self.fc.iter().find(|x| x.abs() > 1.0 + 1e-12) {
            return fail("fc_range", format!("fc entry {v} outside [-1, 1]"));
        }
        if let Some(v) = self.fc.diagonal().iter().find(|x| (*x - 1.0).abs() > 1e-9) {
            return fail("fc_unit_diagonal", format!("fc diagonal entry {v}"));
        }
        if self.feats.data().iter().any(|z| !z.re.is_finite()) {
            return fail("finite", "feature tensor has a non-finite entry".into());
        }
        Ok(())
    }
}

pub(crate) fn modality_slices(sc: &DMatrix<f64>, fc: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let mut afc = fc.abs();
    afc.fill_diagonal(0.0);
    let blend = sc.component_mul(&afc);
    vec![sc.clone(), afc, blend]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedEdge {
    pub i: usize,
    pub j: usize,
    /// Additive strength shift per class.
    pub deltas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub n_per_class: Vec<usize>,
    pub n_rois: usize,
    pub n_communities: usize,
    pub planted_edges: Vec<PlantedEdge>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub mu_in: f64,
    pub mu_out: f64,
    pub feat_dim: usize,
    pub diffusion_alpha: f64,
    pub diffusion_steps: usize,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_per_class: vec![30, 30],
            n_rois: 90,
            n_communities: 6,
            planted_edges: Vec::new(),
            noise_sigma: 0.1,
            seed: 0,
            mu_in: 1.0,
            mu_out: 0.2,
            feat_dim: MAX_FEATURES,
            diffusion_alpha: 0.3,
            diffusion_steps: 200,
        }
    }
}

const BURN_IN: usize = 50;
// keeps the diffusion operator's spectral radius below one
const DIFFUSION_GAIN: f64 = 0.9;

impl CohortSpec {
    pub fn n_classes(&self) -> usize {
        self.n_per_class.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_per_class.is_empty() || self.n_per_class.iter().any(|&n| n == 0) {
            return bad("n_per_class must list at least one nonzero class size".into());
        }
        if self.n_rois < 3 {
            return bad(format!("n_rois must be at least 3, got {}", self.n_rois));
        }
        if self.n_communities == 0 || self.n_communities > self.n_rois {
            return bad(format!("n_communities must lie in 1..={}", self.n_rois));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be nonnegative, got {}", self.noise_sigma));
        }
        if !(self.mu_in.is_finite() && self.mu_out.is_finite()) {
            return bad("community means must be finite".into());
        }
        if self.feat_dim == 0 || self.feat_dim > MAX_FEATURES {
            return bad(format!("feat_dim must lie in 1..={MAX_FEATURES}"));
        }
        if !(self.diffusion_alpha > 0.0 && self.diffusion_alpha <= 1.0) {
            return bad("diffusion_alpha must lie in (0, 1]".into());
        }
        if self.diffusion_steps < 3 {
            return bad("diffusion_steps must be at least 3".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.planted_edges {
            if !(e.i < e.j && e.j < self.n_rois) {
                return bad(format!("planted edge ({}, {}) must satisfy i < j < n_rois", e.i, e.j));
            }
            if !seen.insert((e.i, e.j)) {
                return bad(format!("planted edge ({}, {}) listed twice", e.i, e.j));
            }
            if e.deltas.len() != self.n_classes() || e.deltas.iter().any(|d| !d.is_finite()) {
                return bad(format!(
                    "planted edge ({}, {}) needs {} finite deltas",
                    e.i,
                    e.j,
                    self.n_classes()
                ));
            }
        }
        Ok(())
    }

    fn community(&self, node: usize) -> usize {
        node * self.n_communities / self.n_rois
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of subject `index` of class `label`.
fn subject_seed(root: u64, label: usize, index: usize) -> u64 {
    splitmix(splitmix(root ^ 0x5c_0000_0000) ^ ((label as u64) << 32 | index as u64))
}

fn process_seed(root: u64) -> u64 {
    splitmix(root ^ 0xd1ff_0000_0000_0000)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn structural(spec: &CohortSpec, label: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = spec.n_rois;
    let mut sc = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let mu = if spec.community(i) == spec.community(j) {
                spec.mu_in
            } else {
                spec.mu_out
            };
            let w = (mu + spec.noise_sigma * gaussian(rng)).abs();
            sc[(i, j)] = w;
            sc[(j, i)] = w;
        }
    }
    for e in &spec.planted_edges {
        let w = (sc[(e.i, e.j)] + e.deltas[label]).max(0.0);
        sc[(e.i, e.j)] = w;
        sc[(e.j, e.i)] = w;
    }
    sc
}

/// Correlation matrix of a diffusion process on `sc`. Innovations come from
/// `process`; observation noise of scale `noise_sigma` from `observe`.
pub fn diffusion_fc(
    sc: &DMatrix<f64>,
    alpha: f64,
    steps: usize,
    noise_sigma: f64,
    process: &mut ChaCha8Rng,
    observe: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    let n = sc.nrows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d = sc.row(i).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let norm = DMatrix::from_fn(n, n, |i, j| DIFFUSION_GAIN * inv_sqrt[i] * sc[(i, j)] * inv_sqrt[j]);
    let op = DMatrix::identity(n, n) * (1.0 - alpha) + norm * alpha;
    let mut x = nalgebra::DVector::zeros(n);
    let mut series = DMatrix::zeros(n, steps);
    for t in 0..BURN_IN + steps {
        let eps = nalgebra::DVector::from_fn(n, |_, _| gaussian(process));
        x = &op * x + eps;
        if t >= BURN_IN {
            let col = t - BURN_IN;
            for i in 0..n {
                let obs = if noise_sigma > 0.0 { noise_sigma * gaussian(observe) } else { 0.0 };
                series[(i, col)] = x[i] + obs;
            }
        }
    }
    correlation(&series)
}

fn correlation(series: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, t) = series.shape();
    let centered = DMatrix::from_fn(n, t, |i, k| series[(i, k)] - series.row(i).mean());
    let cov = &centered * centered.transpose();
    let sd: Vec<f64> = (0..n).map(|i| cov[(i, i)].sqrt()).collect();
    let mut fc = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if sd[i] > 0.0 && sd[j] > 0.0 {
            (cov[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    });
    // exact symmetry
    for j in 0..n {
        for i in 0..j {
            let v = fc[(i, j)];
            fc[(j, i)] = v;
        }
    }
    fc
}

/// Row statistics of one modality slice, `n x MAX_FEATURES`.
fn row_statistics(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let off = |i: usize| (0..n).filter(move |&j| j != i);
    let strength: Vec<f64> = (0..n).map(|i| off(i).map(|j| m[(i, j)]).sum()).collect();
    let total: f64 = strength.iter().sum();
    let global_mean = total / (n * (n - 1)) as f64;
    let m3 = m * m * m;
    DMatrix::from_fn(n, MAX_FEATURES, |i, f| {
        let vals: Vec<f64> = off(i).map(|j| m[(i, j)]).collect();
        let k = vals.len() as f64;
        let mean = strength[i] / k;
        match f {
            0 => mean,
            1 => (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k).sqrt(),
            2 => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            3 => vals.iter().copied().fold(f64::INFINITY, f64::min),
            4 => vals.iter().filter(|&&v| v > global_mean).count() as f64 / k,
            5 => {
                let sq: f64 = vals.iter().map(|v| v * v).sum();
                let den = strength[i] * strength[i] - sq;
                if den > 1e-12 {
                    m3[(i, i)] / den
                } else {
                    0.0
                }
            }
            6 => {
                if strength[i] > 0.0 {
                    off(i).map(|j| m[(i, j)] * strength[j]).sum::<f64>() / (strength[i] * n as f64)
                } else {
                    0.0
                }
            }
            _ => {
                if total > 0.0 {
                    strength[i] * n as f64 / total
                } else {
                    0.0
                }
            }
        }
    })
}

/// Node-feature tensor (`n x feat_dim x 3`) built from the modality slices.
pub fn node_features(sc: &DMatrix<f64>, fc: &DMatrix<f64>, feat_dim: usize) -> Tensor3 {
    let stats: Vec<DMatrix<f64>> = modality_slices(sc, fc)
        .iter()
        .map(|m| row_statistics(m).columns(0, feat_dim).into_owned())
        .collect();
    Tensor3::from_real_slices(&stats).expect("uniform slices")
}

/// Generates a labeled cohort. Subjects are ordered by class, then index,
/// with ids `c<label>_s<index>`.
pub fn make_cohort(spec: &CohortSpec) -> Result<Vec<Subject>> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = spec
        .n_per_class
        .iter()
        .enumerate()
        .flat_map(|(label, &count)| (0..count).map(move |idx| (label, idx)))
        .collect();
    let subjects: Vec<Subject> = jobs
        .par_iter()
        .map(|&(label, idx)| {
            let mut rng = ChaCha8Rng::seed_from_u64(subject_seed(spec.seed, label, idx));
            let sc = structural(spec, label, &mut rng);
            let mut process = ChaCha8Rng::seed_from_u64(process_seed(spec.seed));
            let mut observe = ChaCha8Rng::seed_from_u64(rng.random());
            let fc = diffusion_fc(
                &sc,
                spec.diffusion_alpha,
                spec.diffusion_steps,
                spec.noise_sigma,
                &mut process,
                &mut observe,
            );
            let feats = node_features(&sc, &fc, spec.feat_dim);
            Subject {
                id: format!("c{label}_s{idx:03}"),
                label,
                sc,
                fc,
                feats,
            }
        })
        .collect();
    for s in &subjects {
        s.validate(spec.n_rois)?;
    }
    Ok(subjects)
}
