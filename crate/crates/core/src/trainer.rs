//! Mini-batch training of two linear encoders into the shared embedding
//! space, an Adam-style adaptive optimizer, checkpointing and a finite-
//! difference gradient audit.

use std::path::Path;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FeatureDataset, Split};
use crate::loss::{
    batch_loss, loss_gradient, EmbeddingSpace, LadderConfig, LossError, SamplingMode,
};
use crate::mat::{norm, Mat};
use crate::metrics::{evaluate, EvalReport, MetricsError};
use crate::relevance::{bin_candidates, LevelPartition, RelevanceError, RelevanceMatrix};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("affine output is the zero vector for row {0}")]
    ZeroVector(usize),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Relevance(#[from] RelevanceError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("checkpoint manifest error in {path}: {message}")]
    Manifest { path: String, message: String },
}

/// Which loss drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LossFamily {
    TripletSum,
    TripletHardest,
    Ladder,
    LadderHc,
}

/// Full training configuration. The ladder settings double as the triplet
/// margin source: triplet families use `ladder.margins[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub family: LossFamily,
    pub ladder: LadderConfig,
    pub embed_dim: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_initial: f64,
    pub lr_decay_epoch: usize,
    pub lr_decayed: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            family: LossFamily::LadderHc,
            ladder: LadderConfig::two_level_default(SamplingMode::HardContrastive),
            embed_dim: 32,
            batch_size: 128,
            epochs: 30,
            lr_initial: 2e-4,
            lr_decay_epoch: 15,
            lr_decayed: 2e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size < 2 {
            return Err(TrainError::Config("batch size must be >= 2".into()));
        }
        if !(self.lr_initial > 0.0 && self.lr_decayed > 0.0) {
            return Err(TrainError::Config("learning rates must be positive".into()));
        }
        if self.embed_dim < 2 {
            return Err(TrainError::Config("embedding dimension must be >= 2".into()));
        }
        if matches!(self.family, LossFamily::Ladder | LossFamily::LadderHc)
            && self.ladder.level_count() < 2
        {
            return Err(TrainError::Config(
                "ladder families need at least 2 levels; use a triplet family instead".into(),
            ));
        }
        Ok(())
    }

    /// Loss-family view of the ladder settings: triplet families collapse to
    /// a single level, and the family picks the sampling mode.
    pub fn effective_ladder(&self) -> LadderConfig {
        match self.family {
            LossFamily::TripletSum => {
                LadderConfig::single_level(self.ladder.margins[0], SamplingMode::FullSum)
            }
            LossFamily::TripletHardest => {
                LadderConfig::single_level(self.ladder.margins[0], SamplingMode::HardContrastive)
            }
            LossFamily::Ladder => LadderConfig {
                sampling: SamplingMode::FullSum,
                ..self.ladder.clone()
            },
            LossFamily::LadderHc => LadderConfig {
                sampling: SamplingMode::HardContrastive,
                ..self.ladder.clone()
            },
        }
    }
}

/// Affine map followed by L2 normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder {
    pub weight: Mat, // embed_dim x d_in
    pub bias: Vec<f64>,
}

impl LinearEncoder {
    /// Fan-in scaled uniform init in `+-1/sqrt(d_in)`, zero bias.
    pub fn init(d_in: usize, embed_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        let mut weight = Mat::zeros(embed_dim, d_in);
        for w in &mut weight.data {
            *w = rng.random_range(-bound..bound);
        }
        LinearEncoder {
            weight,
            bias: vec![0.0; embed_dim],
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.cols
    }

    pub fn embed_dim(&self) -> usize {
        self.weight.rows
    }

    /// Raw affine outputs `W f + b` for the selected feature rows.
    pub fn affine_rows(&self, features: &Mat, indices: &[usize]) -> Mat {
        assert_eq!(features.cols, self.d_in(), "feature dimension mismatch");
        let d = self.embed_dim();
        let mut out = Mat::zeros(indices.len(), d);
        for (r, &i) in indices.iter().enumerate() {
            let f = features.row(i);
            let row = out.row_mut(r);
            for k in 0..d {
                row[k] = crate::mat::dot(self.weight.row(k), f) + self.bias[k];
            }
        }
        out
    }

    /// Unit-norm embeddings for the selected feature rows.
    pub fn encode(&self, features: &Mat, indices: &[usize]) -> Result<Mat, TrainError> {
        let mut raw = self.affine_rows(features, indices);
        for r in 0..raw.rows {
            let nr = norm(raw.row(r));
            if nr == 0.0 {
                return Err(TrainError::ZeroVector(indices[r]));
            }
            for v in raw.row_mut(r) {
                *v /= nr;
            }
        }
        Ok(raw)
    }
}

/// Deterministic per-(seed, epoch) shuffle into batches; a final short batch
/// is kept only if it holds at least 2 items.
pub fn make_batches(indices: &[usize], batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut shuffled = indices.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    shuffled.shuffle(&mut rng);
    let mut batches: Vec<Vec<usize>> = shuffled.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if let Some(last) = batches.last() {
        if last.len() < 2 {
            batches.pop();
        }
    }
    batches
}

#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2, eps) = (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
        let bias1 = 1.0 - b1.powi(self.t as i32);
        let bias2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grads[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation: EvalReport,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

/// Trained encoder pair plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder_x: LinearEncoder,
    pub encoder_y: LinearEncoder,
    pub config: TrainConfig,
    pub epochs_trained: usize,
}

fn relevance_submatrix(rel: &RelevanceMatrix, indices: &[usize]) -> RelevanceMatrix {
    let n = indices.len();
    let mut values = Mat::zeros(n, n);
    for (r, &q) in indices.iter().enumerate() {
        let row = rel.row(q);
        for (c, &p) in indices.iter().enumerate() {
            values.set(r, c, row[p]);
        }
    }
    RelevanceMatrix {
        values,
        scale: rel.scale,
    }
}

fn batch_partitions(
    rel: &RelevanceMatrix,
    batch: &[usize],
    thresholds: &[f64],
) -> Result<Vec<LevelPartition>, TrainError> {
    let mut parts = Vec::with_capacity(batch.len());
    for (q_local, &q) in batch.iter().enumerate() {
        let row: Vec<f64> = batch.iter().map(|&p| rel.row(q)[p]).collect();
        parts.push(bin_candidates(&row, q_local, thresholds)?);
    }
    Ok(parts)
}

fn param_grads(grad_embed: &Mat, features: &Mat, batch: &[usize]) -> (Mat, Vec<f64>) {
    let d = grad_embed.cols;
    let d_in = features.cols;
    let mut gw = Mat::zeros(d, d_in);
    let mut gb = vec![0.0; d];
    for (r, &i) in batch.iter().enumerate() {
        let g = grad_embed.row(r);
        let f = features.row(i);
        for k in 0..d {
            let gk = g[k];
            gb[k] += gk;
            let row = gw.row_mut(k);
            for (j, &fj) in f.iter().enumerate() {
                row[j] += gk * fj;
            }
        }
    }
    (gw, gb)
}

/// Embeds a dataset split with both encoders into a shared unit-norm space.
pub fn embed_split(
    checkpoint: &Checkpoint,
    dataset: &FeatureDataset,
    split: Split,
) -> Result<(EmbeddingSpace, Vec<usize>), TrainError> {
    let indices = dataset.split_indices(split);
    let v = checkpoint.encoder_x.encode(&dataset.x, &indices)?;
    let h = checkpoint.encoder_y.encode(&dataset.y, &indices)?;
    let space = EmbeddingSpace::new(v, h)?;
    Ok((space, indices))
}

/// Evaluates a checkpoint on one dataset split, clamping each K to the split
/// size.
pub fn evaluate_split(
    checkpoint: &Checkpoint,
    dataset: &FeatureDataset,
    split: Split,
    ks: &[usize],
) -> Result<EvalReport, TrainError> {
    let (space, indices) = embed_split(checkpoint, dataset, split)?;
    let rel = relevance_submatrix(&dataset.relevance, &indices);
    let mut ks_eff: Vec<usize> = ks
        .iter()
        .map(|&k| k.min(indices.len()))
        .filter(|&k| k >= 2)
        .collect();
    ks_eff.sort_unstable();
    ks_eff.dedup();
    Ok(evaluate(&space, &rel, &ks_eff)?)
}

/// Fits both encoders by mini-batch optimization of the configured loss.
/// Deterministic for a fixed `(dataset, cfg, seed)` in this single-threaded
/// implementation.
pub fn train(
    dataset: &FeatureDataset,
    cfg: &TrainConfig,
    validation_ks: &[usize],
) -> Result<(Checkpoint, TrainLog), TrainError> {
    cfg.validate()?;
    let train_idx = dataset.split_indices(Split::Train);
    let val_idx = dataset.split_indices(Split::Validation);
    if train_idx.len() < 2 {
        return Err(TrainError::Config("train split needs at least 2 items".into()));
    }
    if val_idx.len() < 2 {
        return Err(TrainError::Config(
            "validation split needs at least 2 items".into(),
        ));
    }
    let eff = cfg.effective_ladder();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut enc_x = LinearEncoder::init(dataset.x.cols, cfg.embed_dim, &mut rng);
    let mut enc_y = LinearEncoder::init(dataset.y.cols, cfg.embed_dim, &mut rng);
    let mut adam_wx = Adam::new(enc_x.weight.data.len());
    let mut adam_bx = Adam::new(enc_x.bias.len());
    let mut adam_wy = Adam::new(enc_y.weight.data.len());
    let mut adam_by = Adam::new(enc_y.bias.len());

    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let lr = if epoch < cfg.lr_decay_epoch {
            cfg.lr_initial
        } else {
            cfg.lr_decayed
        };
        let mut loss_sum = 0.0;
        let mut example_count = 0usize;
        for (bi, batch) in make_batches(&train_idx, cfg.batch_size, cfg.seed, epoch)
            .iter()
            .enumerate()
        {
            let ev = enc_x.affine_rows(&dataset.x, batch);
            let eh = enc_y.affine_rows(&dataset.y, batch);
            let parts = batch_partitions(&dataset.relevance, batch, &eff.thresholds)?;
            let loss = batch_loss(&ev, &eh, &parts, &parts, &eff)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: bi });
            }
            loss_sum += loss;
            example_count += batch.len();
            let (gv, gh) = loss_gradient(&ev, &eh, &parts, &parts, &eff)?;
            let (gwx, gbx) = param_grads(&gv, &dataset.x, batch);
            let (gwy, gby) = param_grads(&gh, &dataset.y, batch);
            adam_wx.step(&mut enc_x.weight.data, &gwx.data, lr, cfg);
            adam_bx.step(&mut enc_x.bias, &gbx, lr, cfg);
            adam_wy.step(&mut enc_y.weight.data, &gwy.data, lr, cfg);
            adam_by.step(&mut enc_y.bias, &gby, lr, cfg);
        }
        let checkpoint = Checkpoint {
            encoder_x: enc_x.clone(),
            encoder_y: enc_y.clone(),
            config: cfg.clone(),
            epochs_trained: epoch + 1,
        };
        let validation = evaluate_split(&checkpoint, dataset, Split::Validation, validation_ks)?;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / example_count.max(1) as f64,
            validation,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((
        Checkpoint {
            encoder_x: enc_x,
            encoder_y: enc_y,
            config: cfg.clone(),
            epochs_trained: cfg.epochs,
        },
        log,
    ))
}

/// One probed parameter coordinate of the gradient audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientAudit {
    pub max_rel_error: f64,
    pub n_probes: usize,
    pub min_hinge_gap: f64,
    pub probes: Vec<ProbeRecord>,
}

const FD_STEP: f64 = 1e-5;

struct AuditContext<'a> {
    dataset: &'a FeatureDataset,
    batch: Vec<usize>,
    parts: Vec<LevelPartition>,
    eff: LadderConfig,
}

impl AuditContext<'_> {
    fn forward(
        &self,
        enc_x: &LinearEncoder,
        enc_y: &LinearEncoder,
    ) -> (f64, Vec<(usize, usize, bool)>, f64) {
        let ev = enc_x.affine_rows(&self.dataset.x, &self.batch);
        let eh = enc_y.affine_rows(&self.dataset.y, &self.batch);
        let loss = batch_loss(&ev, &eh, &self.parts, &self.parts, &self.eff).unwrap();
        let (activity, min_gap) =
            crate::loss::hinge_activity(&ev, &eh, &self.parts, &self.parts, &self.eff).unwrap();
        (loss, activity, min_gap)
    }
}

/// Compares analytic parameter gradients of one training batch against
/// central finite differences at `n_probes` random coordinates.
///
/// Probes whose perturbation would flip a hinge on or off are resampled so
/// the comparison stays on the smooth piece of the loss. `corruption` is a
/// test hook added to every analytic value before comparison; pass 0 for a
/// genuine audit.
pub fn finite_difference_audit(
    dataset: &FeatureDataset,
    cfg: &TrainConfig,
    n_probes: usize,
    corruption: f64,
) -> Result<GradientAudit, TrainError> {
    cfg.validate()?;
    let train_idx = dataset.split_indices(Split::Train);
    if train_idx.len() < 2 {
        return Err(TrainError::Config("train split needs at least 2 items".into()));
    }
    let eff = cfg.effective_ladder();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let enc_x = LinearEncoder::init(dataset.x.cols, cfg.embed_dim, &mut rng);
    let enc_y = LinearEncoder::init(dataset.y.cols, cfg.embed_dim, &mut rng);
    let batch = make_batches(&train_idx, cfg.batch_size, cfg.seed, 0)
        .into_iter()
        .next()
        .ok_or_else(|| TrainError::Config("empty first batch".into()))?;
    let parts = batch_partitions(&dataset.relevance, &batch, &eff.thresholds)?;
    let ctx = AuditContext {
        dataset,
        batch: batch.clone(),
        parts,
        eff: eff.clone(),
    };

    let (_, base_activity, min_hinge_gap) = ctx.forward(&enc_x, &enc_y);
    let ev = enc_x.affine_rows(&dataset.x, &batch);
    let eh = enc_y.affine_rows(&dataset.y, &batch);
    let (gv, gh) = loss_gradient(&ev, &eh, &ctx.parts, &ctx.parts, &eff)?;
    let (gwx, gbx) = param_grads(&gv, &dataset.x, &batch);
    let (gwy, gby) = param_grads(&gh, &dataset.y, &batch);

    let tensors: [(&str, usize); 4] = [
        ("weight_x", gwx.data.len()),
        ("bias_x", gbx.len()),
        ("weight_y", gwy.data.len()),
        ("bias_y", gby.len()),
    ];
    let total: usize = tensors.iter().map(|(_, l)| l).sum();

    let mut probe_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut probes = Vec::with_capacity(n_probes);
    let mut max_rel_error = 0.0f64;
    let mut sampled = 0usize;
    let mut attempts = 0usize;
    while sampled < n_probes && attempts < n_probes * 50 {
        attempts += 1;
        let mut flat = probe_rng.random_range(0..total);
        let mut tensor = 0usize;
        while flat >= tensors[tensor].1 {
            flat -= tensors[tensor].1;
            tensor += 1;
        }
        let analytic = match tensor {
            0 => gwx.data[flat],
            1 => gbx[flat],
            2 => gwy.data[flat],
            _ => gby[flat],
        } + corruption;

        let eval_at = |delta: f64| {
            let mut ex = enc_x.clone();
            let mut ey = enc_y.clone();
            match tensor {
                0 => ex.weight.data[flat] += delta,
                1 => ex.bias[flat] += delta,
                2 => ey.weight.data[flat] += delta,
                _ => ey.bias[flat] += delta,
            }
            ctx.forward(&ex, &ey)
        };
        let (fp, act_p, _) = eval_at(FD_STEP);
        let (fm, act_m, _) = eval_at(-FD_STEP);
        if act_p != base_activity || act_m != base_activity {
            continue; // perturbation crossed a hinge kink; resample
        }
        let numeric = (fp - fm) / (2.0 * FD_STEP);
        let rel_error = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        max_rel_error = max_rel_error.max(rel_error);
        probes.push(ProbeRecord {
            tensor: tensors[tensor].0.to_string(),
            index: flat,
            analytic,
            numeric,
            rel_error,
        });
        sampled += 1;
    }
    Ok(GradientAudit {
        max_rel_error,
        n_probes: probes.len(),
        min_hinge_gap,
        probes,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    embed_dim: usize,
    d_x: usize,
    d_y: usize,
    epochs_trained: usize,
    byte_order: String,
    dtype: String,
    config: TrainConfig,
}

fn ck_io(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Manifest-plus-blob checkpoint format: a JSON `manifest` and an
/// `encoders.bin` of little-endian 64-bit floats holding `W_x, b_x, W_y, b_y`.
pub fn save_checkpoint(checkpoint: &Checkpoint, dir: &Path) -> Result<(), TrainError> {
    std::fs::create_dir_all(dir).map_err(ck_io(dir))?;
    let manifest = CheckpointManifest {
        embed_dim: checkpoint.encoder_x.embed_dim(),
        d_x: checkpoint.encoder_x.d_in(),
        d_y: checkpoint.encoder_y.d_in(),
        epochs_trained: checkpoint.epochs_trained,
        byte_order: "little-endian".into(),
        dtype: "f64".into(),
        config: checkpoint.config.clone(),
    };
    let manifest_path = dir.join("manifest");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| TrainError::Manifest {
        path: manifest_path.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(&manifest_path, json).map_err(ck_io(&manifest_path))?;
    let mut bytes = Vec::new();
    for part in [
        &checkpoint.encoder_x.weight.data,
        &checkpoint.encoder_x.bias,
        &checkpoint.encoder_y.weight.data,
        &checkpoint.encoder_y.bias,
    ] {
        for &v in part.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let blob_path = dir.join("encoders.bin");
    std::fs::write(&blob_path, bytes).map_err(ck_io(&blob_path))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, TrainError> {
    let manifest_path = dir.join("manifest");
    let text = std::fs::read_to_string(&manifest_path).map_err(ck_io(&manifest_path))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| TrainError::Manifest {
            path: manifest_path.display().to_string(),
            message: e.to_string(),
        })?;
    let blob_path = dir.join("encoders.bin");
    let bytes = std::fs::read(&blob_path).map_err(ck_io(&blob_path))?;
    let d = manifest.embed_dim;
    let expected = (d * manifest.d_x + d + d * manifest.d_y + d) * 8;
    if bytes.len() != expected {
        return Err(TrainError::Manifest {
            path: blob_path.display().to_string(),
            message: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |len: usize| -> Vec<f64> { values.by_ref().take(len).collect() };
    let encoder_x = LinearEncoder {
        weight: Mat {
            rows: d,
            cols: manifest.d_x,
            data: take(d * manifest.d_x),
        },
        bias: take(d),
    };
    let encoder_y = LinearEncoder {
        weight: Mat {
            rows: d,
            cols: manifest.d_y,
            data: take(d * manifest.d_y),
        },
        bias: take(d),
    };
    Ok(Checkpoint {
        encoder_x,
        encoder_y,
        config: manifest.config,
        epochs_trained: manifest.epochs_trained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use approx::assert_abs_diff_eq;

    fn tiny_dataset() -> FeatureDataset {
        generate_synthetic(&SyntheticSpec {
            n: 80,
            latent_dim: 4,
            d_x: 8,
            d_y: 8,
            noise: 0.05,
            clusters: 4,
            spread: 0.35,
            center_spread: 1.05,
            sharpness: 3.0,
            seed: 3,
        })
        .unwrap()
    }

    fn fast_cfg(family: LossFamily) -> TrainConfig {
        TrainConfig {
            family,
            embed_dim: 8,
            batch_size: 16,
            epochs: 3,
            seed: 5,
            lr_initial: 1e-3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn encode_identity_like_preserves_unit_input() {
        let enc = LinearEncoder {
            weight: Mat::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            bias: vec![0.0, 0.0],
        };
        let features = Mat::from_rows(vec![vec![0.6, 0.8]]);
        let out = enc.encode(&features, &[0]).unwrap();
        assert_abs_diff_eq!(out.get(0, 0), 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(out.get(0, 1), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn encode_output_is_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let enc = LinearEncoder::init(5, 3, &mut rng);
        let mut features = Mat::zeros(4, 5);
        for v in &mut features.data {
            *v = rng.random_range(-2.0..2.0);
        }
        let out = enc.encode(&features, &[0, 1, 2, 3]).unwrap();
        for r in 0..4 {
            assert_abs_diff_eq!(norm(out.row(r)), 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn encode_hand_case() {
        let enc = LinearEncoder {
            weight: Mat::from_rows(vec![vec![1.0, 1.0], vec![0.0, 2.0]]),
            bias: vec![1.0, -1.0],
        };
        let features = Mat::from_rows(vec![vec![1.0, 2.0]]);
        // affine: (1+2+1, 4-1) = (4, 3), norm 5
        let out = enc.encode(&features, &[0]).unwrap();
        assert_abs_diff_eq!(out.get(0, 0), 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(out.get(0, 1), 0.6, epsilon = 1e-12);
    }

    #[test]
    fn encode_zero_vector_errors() {
        let enc = LinearEncoder {
            weight: Mat::from_rows(vec![vec![0.0], vec![0.0]]),
            bias: vec![0.0, 0.0],
        };
        let features = Mat::from_rows(vec![vec![1.0]]);
        assert!(matches!(
            enc.encode(&features, &[0]),
            Err(TrainError::ZeroVector(0))
        ));
    }

    #[test]
    fn batches_deterministic_and_exhaustive() {
        let idx: Vec<usize> = (0..23).collect();
        let a = make_batches(&idx, 5, 7, 2);
        let b = make_batches(&idx, 5, 7, 2);
        assert_eq!(a, b);
        assert_ne!(a, make_batches(&idx, 5, 7, 3));
        let mut seen: Vec<usize> = a.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, idx);
        // 23 = 4 * 5 + 3: short final batch of 3 is kept
        assert_eq!(a.len(), 5);
        assert_eq!(a.last().unwrap().len(), 3);
        // a trailing singleton is dropped
        let idx: Vec<usize> = (0..11).collect();
        let c = make_batches(&idx, 5, 7, 0);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let dataset = tiny_dataset();
        let mut cfg = fast_cfg(LossFamily::TripletSum);
        cfg.lr_initial = 1e-300;
        cfg.lr_decayed = 1e-300;
        let (ck, log) = train(&dataset, &cfg, &[5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init_x = LinearEncoder::init(dataset.x.cols, cfg.embed_dim, &mut rng);
        for (a, b) in ck.encoder_x.weight.data.iter().zip(&init_x.weight.data) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        // batch composition changes per epoch, but the validation report
        // (whole-split, no batching) must stay fixed with frozen encoders
        let first = &log.epochs[0].validation;
        for e in &log.epochs {
            for d in 0..2 {
                assert_abs_diff_eq!(
                    e.validation.directions[d].mean_rank,
                    first.directions[d].mean_rank,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn ladder_with_zero_upper_weights_reproduces_triplet_run() {
        let dataset = tiny_dataset();
        let triplet = fast_cfg(LossFamily::TripletSum);
        let mut ladder = fast_cfg(LossFamily::Ladder);
        ladder.ladder = LadderConfig::new(
            vec![0.63],
            vec![0.2, 0.01],
            vec![1.0, 0.0],
            SamplingMode::FullSum,
        )
        .unwrap();
        let (ck_a, log_a) = train(&dataset, &triplet, &[5]).unwrap();
        let (ck_b, log_b) = train(&dataset, &ladder, &[5]).unwrap();
        for (a, b) in log_a.epochs.iter().zip(&log_b.epochs) {
            assert_eq!(a.train_loss, b.train_loss);
        }
        assert_eq!(ck_a.encoder_x.weight.data, ck_b.encoder_x.weight.data);
    }

    #[test]
    fn training_is_deterministic() {
        let dataset = tiny_dataset();
        let cfg = fast_cfg(LossFamily::LadderHc);
        let (a, _) = train(&dataset, &cfg, &[5]).unwrap();
        let (b, _) = train(&dataset, &cfg, &[5]).unwrap();
        assert_eq!(a.encoder_x.weight.data, b.encoder_x.weight.data);
        assert_eq!(a.encoder_y.bias, b.encoder_y.bias);
    }

    #[test]
    fn ladder_family_requires_two_levels() {
        let dataset = tiny_dataset();
        let mut cfg = fast_cfg(LossFamily::Ladder);
        cfg.ladder = LadderConfig::single_level(0.2, SamplingMode::FullSum);
        assert!(matches!(
            train(&dataset, &cfg, &[5]),
            Err(TrainError::Config(_))
        ));
    }

    #[test]
    fn audit_passes_and_detects_corruption() {
        let dataset = tiny_dataset();
        let cfg = fast_cfg(LossFamily::Ladder);
        let audit = finite_difference_audit(&dataset, &cfg, 100, 0.0).unwrap();
        assert!(audit.n_probes >= 90, "only {} clean probes", audit.n_probes);
        assert!(
            audit.max_rel_error < 1e-4,
            "max rel error {}",
            audit.max_rel_error
        );
        let corrupted = finite_difference_audit(&dataset, &cfg, 100, 0.5).unwrap();
        assert!(corrupted.max_rel_error > 1e-2);
    }

    #[test]
    fn checkpoint_round_trip_is_identity() {
        let dataset = tiny_dataset();
        let cfg = fast_cfg(LossFamily::LadderHc);
        let (ck, _) = train(&dataset, &cfg, &[5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&ck, dir.path()).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(ck, back);
    }
}
