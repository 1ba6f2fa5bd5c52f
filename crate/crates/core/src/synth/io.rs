//! Dataset directory layout:
//!
//! ```text
//! manifest.json         {"schema_version", "n_rois", "feat_dim", "subjects": [...]}
//! sc_<id>.csv           N x N, row-major, comma separated
//! fc_<id>.csv           N x N
//! feat_<id>_<r>.csv     N x D, one file per modality slice r
//! ```
//!
//! Floats are written with 17 significant digits so a save/load cycle is
//! bitwise lossless.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Subject, N_MODALITIES};
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub label: usize,
    pub sc: String,
    pub fc: String,
    pub feats: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub n_rois: usize,
    pub feat_dim: usize,
    pub subjects: Vec<ManifestEntry>,
}

/// Formats a matrix as row-major CSV with 17 significant digits.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(m.len() * 24);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{:.16e}", m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let malformed = |detail: String| Error::Malformed {
        path: path.to_path_buf(),
        detail,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| malformed(format!("line {}: cannot parse {:?}", lineno + 1, tok.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(malformed(format!(
                    "line {} has {} columns, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(malformed("empty matrix".into()));
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("subject id {id:?} must be nonempty [A-Za-z0-9_-]")))
    }
}

/// Writes the cohort into `dir`, creating it if needed.
pub fn save_cohort(dir: &Path, cohort: &[Subject]) -> Result<()> {
    let first = cohort
        .first()
        .ok_or_else(|| Error::InvalidConfig("cannot save an empty cohort".into()))?;
    let n_rois = first.n();
    let feat_dim = first.feats.dims().1;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(cohort.len());
    for s in cohort {
        check_id(&s.id)?;
        s.validate(n_rois)?;
        if s.feats.dims().1 != feat_dim {
            return Err(Error::shape("save_cohort", format!("feature width {feat_dim}"), s.feats.dims().1));
        }
        let entry = ManifestEntry {
            id: s.id.clone(),
            label: s.label,
            sc: format!("sc_{}.csv", s.id),
            fc: format!("fc_{}.csv", s.id),
            feats: (0..N_MODALITIES).map(|r| format!("feat_{}_{r}.csv", s.id)).collect(),
        };
        write_matrix(&dir.join(&entry.sc), &s.sc)?;
        write_matrix(&dir.join(&entry.fc), &s.fc)?;
        for (r, name) in entry.feats.iter().enumerate() {
            write_matrix(&dir.join(name), &s.feats.real_slice(r))?;
        }
        entries.push(entry);
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        n_rois,
        feat_dim,
        subjects: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.clone(),
        detail: e.to_string(),
    })?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::Malformed {
            path,
            detail: format!("schema_version {} unsupported, expected {SCHEMA_VERSION}", manifest.schema_version),
        });
    }
    Ok(manifest)
}

/// Reads a dataset directory, checking every subject invariant.
pub fn load_cohort(dir: &Path) -> Result<Vec<Subject>> {
    let manifest = read_manifest(dir)?;
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(manifest.subjects.len());
    for e in &manifest.subjects {
        if !seen.insert(e.id.as_str()) {
            return Err(Error::Malformed {
                path: dir.join(MANIFEST_FILE),
                detail: format!("duplicate subject id {:?}", e.id),
            });
        }
        if e.feats.len() != N_MODALITIES {
            return Err(Error::Malformed {
                path: dir.join(MANIFEST_FILE),
                detail: format!("subject {:?} lists {} feature files, expected {N_MODALITIES}", e.id, e.feats.len()),
            });
        }
        let sc = read_matrix(&dir.join(&e.sc))?;
        let fc = read_matrix(&dir.join(&e.fc))?;
        let slices = e
            .feats
            .iter()
            .map(|f| read_matrix(&dir.join(f)))
            .collect::<Result<Vec<_>>>()?;
        if slices.iter().any(|s| s.shape() != (manifest.n_rois, manifest.feat_dim)) {
            return Err(Error::InvariantViolation {
                subject: e.id.clone(),
                invariant: "shape",
                detail: format!("feature slices must be {}x{}", manifest.n_rois, manifest.feat_dim),
            });
        }
        let subject = Subject {
            id: e.id.clone(),
            label: e.label,
            sc,
            fc,
            feats: Tensor3::from_real_slices(&slices)?,
        };
        subject.validate(manifest.n_rois)?;
        out.push(subject);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_cohort, CohortSpec};

    fn cohort() -> Vec<Subject> {
        make_cohort(&CohortSpec {
            n_per_class: vec![2, 1],
            n_rois: 6,
            n_communities: 2,
            diffusion_steps: 40,
            seed: 9,
            ..CohortSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let c = cohort();
        save_cohort(dir.path(), &c).unwrap();
        assert_eq!(load_cohort(dir.path()).unwrap(), c);
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_cohort(dir.path(), &cohort()).unwrap();
        fs::remove_file(dir.path().join("fc_c0_s001.csv")).unwrap();
        match load_cohort(dir.path()) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("fc_c0_s001.csv")),
            other => panic!("expected missing file, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_sc_names_symmetry() {
        let dir = tempfile::tempdir().unwrap();
        let c = cohort();
        save_cohort(dir.path(), &c).unwrap();
        let mut sc = c[0].sc.clone();
        sc[(0, 1)] += 0.5;
        write_matrix(&dir.path().join("sc_c0_s000.csv"), &sc).unwrap();
        match load_cohort(dir.path()) {
            Err(Error::InvariantViolation { invariant, subject, .. }) => {
                assert_eq!(invariant, "symmetry");
                assert_eq!(subject, "c0_s000");
            }
            other => panic!("expected invariant violation, got {other:?}"),
        }
    }

    #[test]
    fn malformed_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "1,2\n3,x\n").unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::Malformed { .. })));
        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::Malformed { .. })));
    }
}
