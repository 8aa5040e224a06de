//! Synthetic bimodal dataset generation with planted relevance structure,
//! plus the on-disk manifest + blob format and its loader.
//!
//! On disk a dataset is a directory holding a `manifest` (JSON), raw
//! little-endian 32-bit float blobs `x.bin`, `y.bin` (row-major), an optional
//! `relevance.bin` (N x N), and an optional `texts` file with one line per
//! item.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat::{dot, norm, Mat};
use crate::relevance::{RelevanceMatrix, RelevanceScale};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("manifest error in {path}: {message}")]
    Manifest { path: String, message: String },
    #[error("shape mismatch in {file}: expected {expected} bytes, found {found}")]
    ShapeMismatch {
        file: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {file} at flat index {index}")]
    NonFiniteValue { file: String, index: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Paired feature vectors for two modalities with ground-truth pairing
/// (row n of `x` pairs with row n of `y`) and a relevance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub x: Mat,
    pub y: Mat,
    pub relevance: RelevanceMatrix,
    /// False when the relevance matrix is the pairing-only fallback rather
    /// than loaded or planted scores; ladder losses require explicit scores.
    pub explicit_relevance: bool,
    pub texts: Option<Vec<String>>,
    pub splits: Vec<Split>,
}

impl FeatureDataset {
    pub fn len(&self) -> usize {
        self.x.rows
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows == 0
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    fn validate(&self) -> Result<(), DataError> {
        let n = self.x.rows;
        if n < 2 {
            return Err(DataError::InvalidSpec(format!("need N >= 2, got {n}")));
        }
        if self.y.rows != n || self.splits.len() != n {
            return Err(DataError::InvalidSpec(
                "x, y and split labels must agree on N".into(),
            ));
        }
        if self.relevance.values.rows != n || self.relevance.values.cols != n {
            return Err(DataError::InvalidSpec("relevance matrix must be N x N".into()));
        }
        if let Some(texts) = &self.texts {
            if texts.len() != n {
                return Err(DataError::InvalidSpec("one text line per item".into()));
            }
        }
        Ok(())
    }
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub latent_dim: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub noise: f64,
    pub clusters: usize,
    /// Within-cluster latent spread relative to unit-variance cluster centers.
    #[serde(default = "default_spread")]
    pub spread: f64,
    /// Spread of sibling cluster centers around their shared parent center.
    /// Clusters come in sibling pairs, giving three tiers of relatedness:
    /// same cluster, sibling cluster, unrelated.
    #[serde(default = "default_center_spread")]
    pub center_spread: f64,
    /// Exponent applied to `(1 + cos) / 2` when planting relevance degrees.
    /// Values above 1 concentrate relevance mass toward 0, so only genuinely
    /// related pairs reach high degrees.
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
    pub seed: u64,
}

fn default_sharpness() -> f64 {
    3.0
}

fn default_spread() -> f64 {
    0.45
}

fn default_center_spread() -> f64 {
    0.5
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 2000,
            latent_dim: 8,
            d_x: 64,
            d_y: 64,
            noise: 0.1,
            clusters: 32,
            spread: default_spread(),
            center_spread: default_center_spread(),
            sharpness: default_sharpness(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), DataError> {
        if self.n < 2 {
            return Err(DataError::InvalidSpec(format!("need N >= 2, got {}", self.n)));
        }
        if self.latent_dim == 0 || self.latent_dim > self.d_x.min(self.d_y) {
            return Err(DataError::InvalidSpec(
                "latent dimension must be in 1..=min(d_x, d_y)".into(),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(DataError::InvalidSpec("noise must be finite and >= 0".into()));
        }
        if self.clusters == 0 {
            return Err(DataError::InvalidSpec("need at least one cluster".into()));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(DataError::InvalidSpec("spread must be finite and > 0".into()));
        }
        if !(self.center_spread >= 0.0 && self.center_spread.is_finite()) {
            return Err(DataError::InvalidSpec(
                "center spread must be finite and >= 0".into(),
            ));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(DataError::InvalidSpec(
                "sharpness must be finite and > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Deterministic index-based split fractions: the leading 40% of items train,
/// the next 10% validate, the remainder tests.
const TRAIN_FRACTION: f64 = 0.4;
const VALIDATION_FRACTION: f64 = 0.1;

fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

/// Draws clustered latent vectors, maps them through fixed random linear maps
/// into both feature modalities, and plants relevance as
/// `((1 + cos(z_q, z_p)) / 2) ^ sharpness` with the diagonal forced to the
/// row maximum. All stored values are
/// quantized to 32-bit float precision so that save/load is the identity.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<FeatureDataset, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.latent_dim;
    let n = spec.n;

    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let parents: Vec<Vec<f64>> = (0..spec.clusters.div_ceil(2))
        .map(|_| (0..k).map(|_| normal(&mut rng)).collect())
        .collect();
    let centers: Vec<Vec<f64>> = (0..spec.clusters)
        .map(|j| {
            let p = &parents[j / 2];
            (0..k)
                .map(|d| p[d] + spec.center_spread * normal(&mut rng))
                .collect()
        })
        .collect();
    let latents: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let c = &centers[i % spec.clusters];
            (0..k)
                .map(|d| c[d] + spec.spread * normal(&mut rng))
                .collect()
        })
        .collect();

    let scale = 1.0 / (k as f64).sqrt();
    let map_a: Vec<Vec<f64>> = (0..spec.d_x)
        .map(|_| (0..k).map(|_| scale * normal(&mut rng)).collect())
        .collect();
    let map_b: Vec<Vec<f64>> = (0..spec.d_y)
        .map(|_| (0..k).map(|_| scale * normal(&mut rng)).collect())
        .collect();

    let mut x = Mat::zeros(n, spec.d_x);
    let mut y = Mat::zeros(n, spec.d_y);
    for i in 0..n {
        let z = &latents[i];
        for (d, row) in map_a.iter().enumerate() {
            x.set(i, d, quantize(dot(row, z) + spec.noise * normal(&mut rng)));
        }
        for (d, row) in map_b.iter().enumerate() {
            y.set(i, d, quantize(dot(row, z) + spec.noise * normal(&mut rng)));
        }
    }

    let mut rel = Mat::zeros(n, n);
    for q in 0..n {
        for p in 0..n {
            let c = dot(&latents[q], &latents[p]) / (norm(&latents[q]) * norm(&latents[p]));
            rel.set(q, p, quantize(((1.0 + c) / 2.0).powf(spec.sharpness)));
        }
        let row_max = rel.row(q).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        rel.set(q, q, row_max);
    }

    let n_train = ((n as f64) * TRAIN_FRACTION).round() as usize;
    let n_val = ((n as f64) * VALIDATION_FRACTION).round() as usize;
    let splits: Vec<Split> = (0..n)
        .map(|i| {
            if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            }
        })
        .collect();

    let dataset = FeatureDataset {
        x,
        y,
        relevance: RelevanceMatrix {
            values: rel,
            scale: RelevanceScale::Unit,
        },
        explicit_relevance: true,
        texts: None,
        splits,
    };
    dataset.validate()?;
    Ok(dataset)
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    n: usize,
    d_x: usize,
    d_y: usize,
    byte_order: String,
    dtype: String,
    splits: Vec<Split>,
    x_file: String,
    y_file: String,
    relevance_file: Option<String>,
    relevance_scale: Option<RelevanceScale>,
    texts_file: Option<String>,
}

fn write_f32_blob(path: &Path, values: &[f64]) -> Result<(), DataError> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn read_f32_blob(path: &Path, expected_len: usize) -> Result<Vec<f64>, DataError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let file = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    if bytes.len() != expected_len * 4 {
        return Err(DataError::ShapeMismatch {
            file,
            expected: expected_len * 4,
            found: bytes.len(),
        });
    }
    let mut out = Vec::with_capacity(expected_len);
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        if !v.is_finite() {
            return Err(DataError::NonFiniteValue { file, index: i });
        }
        out.push(v);
    }
    Ok(out)
}

/// Writes the dataset directory format; [`load_dataset`] inverts it exactly.
pub fn save_dataset(dataset: &FeatureDataset, dir: &Path) -> Result<(), DataError> {
    dataset.validate()?;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = Manifest {
        n: dataset.len(),
        d_x: dataset.x.cols,
        d_y: dataset.y.cols,
        byte_order: "little-endian".into(),
        dtype: "f32".into(),
        splits: dataset.splits.clone(),
        x_file: "x.bin".into(),
        y_file: "y.bin".into(),
        relevance_file: dataset
            .explicit_relevance
            .then(|| "relevance.bin".to_string()),
        relevance_scale: dataset.explicit_relevance.then_some(dataset.relevance.scale),
        texts_file: dataset.texts.as_ref().map(|_| "texts".to_string()),
    };
    write_f32_blob(&dir.join("x.bin"), &dataset.x.data)?;
    write_f32_blob(&dir.join("y.bin"), &dataset.y.data)?;
    if dataset.explicit_relevance {
        write_f32_blob(&dir.join("relevance.bin"), &dataset.relevance.values.data)?;
    }
    if let Some(texts) = &dataset.texts {
        let path = dir.join("texts");
        std::fs::write(&path, texts.join("\n") + "\n").map_err(io_err(&path))?;
    }
    let manifest_path = dir.join("manifest");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| DataError::Manifest {
        path: manifest_path.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(&manifest_path, json).map_err(io_err(&manifest_path))
}

/// Parses the manifest, loads the feature blobs and validates shapes and
/// invariants.
pub fn load_dataset(dir: &Path) -> Result<FeatureDataset, DataError> {
    let manifest_path = dir.join("manifest");
    let text = std::fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| DataError::Manifest {
        path: manifest_path.display().to_string(),
        message: e.to_string(),
    })?;
    if manifest.byte_order != "little-endian" || manifest.dtype != "f32" {
        return Err(DataError::Manifest {
            path: manifest_path.display().to_string(),
            message: format!(
                "unsupported encoding: byte_order={}, dtype={}",
                manifest.byte_order, manifest.dtype
            ),
        });
    }
    if manifest.splits.len() != manifest.n {
        return Err(DataError::Manifest {
            path: manifest_path.display().to_string(),
            message: format!(
                "splits field has {} labels for n = {}",
                manifest.splits.len(),
                manifest.n
            ),
        });
    }
    let n = manifest.n;
    let x = Mat {
        rows: n,
        cols: manifest.d_x,
        data: read_f32_blob(&dir.join(&manifest.x_file), n * manifest.d_x)?,
    };
    let y = Mat {
        rows: n,
        cols: manifest.d_y,
        data: read_f32_blob(&dir.join(&manifest.y_file), n * manifest.d_y)?,
    };
    let explicit_relevance = manifest.relevance_file.is_some();
    let relevance = match &manifest.relevance_file {
        Some(file) => RelevanceMatrix {
            values: Mat {
                rows: n,
                cols: n,
                data: read_f32_blob(&dir.join(file), n * n)?,
            },
            scale: manifest.relevance_scale.unwrap_or(RelevanceScale::Raw),
        },
        None => {
            // pairing-only relevance: 1 on the diagonal, 0 elsewhere
            let mut values = Mat::zeros(n, n);
            for q in 0..n {
                values.set(q, q, 1.0);
            }
            RelevanceMatrix {
                values,
                scale: RelevanceScale::Unit,
            }
        }
    };
    let texts = match &manifest.texts_file {
        Some(file) => {
            let path = dir.join(file);
            let raw = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            let lines: Vec<String> = raw.lines().map(str::to_owned).collect();
            if lines.len() != n {
                return Err(DataError::Manifest {
                    path: path.display().to_string(),
                    message: format!("{} text lines for n = {}", lines.len(), n),
                });
            }
            Some(lines)
        }
        None => None,
    };
    let dataset = FeatureDataset {
        x,
        y,
        relevance,
        explicit_relevance,
        texts,
        splits: manifest.splits,
    };
    dataset.validate()?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            n: 100,
            latent_dim: 8,
            d_x: 16,
            d_y: 12,
            noise: 0.05,
            clusters: 5,
            spread: 0.35,
            center_spread: 1.05,
            sharpness: 3.0,
            seed: 7,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(&small_spec()).unwrap();
        let b = generate_synthetic(&small_spec()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_self_pair_relevance_is_max() {
        let spec = SyntheticSpec {
            noise: 0.0,
            ..small_spec()
        };
        let d = generate_synthetic(&spec).unwrap();
        for q in 0..d.len() {
            assert_abs_diff_eq!(d.relevance.values.get(q, q), 1.0, epsilon = 1e-6);
            let row_max = d
                .relevance
                .row(q)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(d.relevance.values.get(q, q), row_max);
        }
    }

    #[test]
    fn planted_relevance_tracks_latent_cosine() {
        // relevance is a monotone map of latent cosine, so the orderings agree
        let spec = SyntheticSpec {
            noise: 0.0,
            ..small_spec()
        };
        let d = generate_synthetic(&spec).unwrap();
        for q in 0..10 {
            let row = d.relevance.row(q);
            let mut order: Vec<usize> = (0..d.len()).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
            for w in order.windows(2) {
                assert!(row[w[0]] >= row[w[1]]);
            }
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut spec = small_spec();
        spec.latent_dim = 100;
        assert!(matches!(
            generate_synthetic(&spec),
            Err(DataError::InvalidSpec(_))
        ));
        let mut spec = small_spec();
        spec.n = 1;
        assert!(generate_synthetic(&spec).is_err());
        let mut spec = small_spec();
        spec.noise = f64::NAN;
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn save_load_round_trip_is_identity() {
        let mut d = generate_synthetic(&small_spec()).unwrap();
        d.texts = Some((0..d.len()).map(|i| format!("item number {i}")).collect());
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&d, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn wrong_blob_length_is_shape_mismatch() {
        let d = generate_synthetic(&small_spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&d, dir.path()).unwrap();
        std::fs::write(dir.path().join("x.bin"), [0u8; 12]).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(DataError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_blob_is_reported() {
        let d = generate_synthetic(&small_spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&d, dir.path()).unwrap();
        let mut bytes = std::fs::read(dir.path().join("x.bin")).unwrap();
        bytes[..4].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(dir.path().join("x.bin"), bytes).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(DataError::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn hand_written_fixture_loads_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = r#"{
            "n": 2, "d_x": 2, "d_y": 1,
            "byte_order": "little-endian", "dtype": "f32",
            "splits": ["train", "test"],
            "x_file": "x.bin", "y_file": "y.bin",
            "relevance_file": null, "relevance_scale": null, "texts_file": null
        }"#;
        std::fs::write(dir.path().join("manifest"), manifest).unwrap();
        let x: Vec<u8> = [1.5f32, -2.0, 0.25, 4.0]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let y: Vec<u8> = [10.0f32, -1.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(dir.path().join("x.bin"), x).unwrap();
        std::fs::write(dir.path().join("y.bin"), y).unwrap();
        let d = load_dataset(dir.path()).unwrap();
        assert_eq!(d.x.row(0), &[1.5, -2.0]);
        assert_eq!(d.x.row(1), &[0.25, 4.0]);
        assert_eq!(d.y.row(1), &[-1.0]);
        assert_eq!(d.splits, vec![Split::Train, Split::Test]);
        // pairing-only fallback relevance
        assert_eq!(d.relevance.values.get(0, 0), 1.0);
        assert_eq!(d.relevance.values.get(0, 1), 0.0);
    }
}
