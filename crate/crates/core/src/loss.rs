//! Triplet and ladder ranking losses over cosine similarities, with
//! hard-negative / hard-contrastive sampling and analytic gradients.
//!
//! The ladder loss enforces the inequality chain
//! `s(q, gt) > s(q, N1) > s(q, N2) > ...` with a per-level margin `alpha_l`
//! and weight `beta_l`. With a single level it reduces to the triplet loss;
//! hard-contrastive sampling evaluates each level on its single hardest pair.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat::{dot, norm, Mat};
use crate::relevance::LevelPartition;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("partition has {got} levels but the config declares {expected}")]
    PartitionMismatch { expected: usize, got: usize },
    #[error("level {level} is empty")]
    EmptyLevel { level: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid ladder config: {0}")]
    InvalidConfig(String),
}

/// How the per-level hinge sums are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Sum every hinge across the level pair.
    FullSum,
    /// Evaluate one hinge per level on the hardest contrastive pair.
    HardContrastive,
}

/// Negative handling for the plain triplet loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripletMode {
    Sum,
    Hardest,
}

/// Ladder count, level thresholds, per-level margins and weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderConfig {
    pub thresholds: Vec<f64>,
    pub margins: Vec<f64>,
    pub weights: Vec<f64>,
    pub sampling: SamplingMode,
}

impl LadderConfig {
    pub fn new(
        thresholds: Vec<f64>,
        margins: Vec<f64>,
        weights: Vec<f64>,
        sampling: SamplingMode,
    ) -> Result<Self, LossError> {
        let l = margins.len();
        if l == 0 {
            return Err(LossError::InvalidConfig("need at least one level".into()));
        }
        if thresholds.len() != l - 1 {
            return Err(LossError::InvalidConfig(format!(
                "{l} levels require {} thresholds, got {}",
                l - 1,
                thresholds.len()
            )));
        }
        if weights.len() != l {
            return Err(LossError::InvalidConfig(format!(
                "{l} levels require {l} weights, got {}",
                weights.len()
            )));
        }
        if margins.iter().any(|&m| !(m > 0.0)) {
            return Err(LossError::InvalidConfig("margins must be positive".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || !(weights[0] > 0.0) {
            return Err(LossError::InvalidConfig(
                "weights must be non-negative with weights[0] > 0".into(),
            ));
        }
        if thresholds.windows(2).any(|w| w[0] <= w[1]) {
            return Err(LossError::InvalidConfig(
                "thresholds must be strictly decreasing".into(),
            ));
        }
        Ok(LadderConfig {
            thresholds,
            margins,
            weights,
            sampling,
        })
    }

    /// Two-level defaults: theta1 = 0.63, alpha = (0.2, 0.01), beta = (1, 0.25).
    pub fn two_level_default(sampling: SamplingMode) -> Self {
        LadderConfig::new(vec![0.63], vec![0.2, 0.01], vec![1.0, 0.25], sampling).unwrap()
    }

    /// Three-level defaults add theta2 = 0.56, alpha3 = 0.01, beta3 = 0.125.
    pub fn three_level_default(sampling: SamplingMode) -> Self {
        LadderConfig::new(
            vec![0.63, 0.56],
            vec![0.2, 0.01, 0.01],
            vec![1.0, 0.25, 0.125],
            sampling,
        )
        .unwrap()
    }

    /// Degenerate single-level config; equivalent to the triplet loss.
    pub fn single_level(margin: f64, sampling: SamplingMode) -> Self {
        LadderConfig::new(vec![], vec![margin], vec![1.0], sampling).unwrap()
    }

    pub fn level_count(&self) -> usize {
        self.margins.len()
    }
}

/// One query's cosine similarities to every candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRow {
    pub query: usize,
    pub s: Vec<f64>,
}

impl SimilarityRow {
    pub fn new(query: usize, s: Vec<f64>) -> Result<Self, LossError> {
        if s.iter().any(|&v| !v.is_finite() || v.abs() > 1.0 + 1e-6) {
            return Err(LossError::DimensionMismatch(
                "similarities must be finite and within [-1, 1]".into(),
            ));
        }
        Ok(SimilarityRow { query, s })
    }
}

/// Unit-norm embedded vectors for both modalities in a shared space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    pub v: Mat,
    pub h: Mat,
}

impl EmbeddingSpace {
    pub fn new(v: Mat, h: Mat) -> Result<Self, LossError> {
        if v.cols != h.cols {
            return Err(LossError::DimensionMismatch(format!(
                "modalities disagree on dimension: {} vs {}",
                v.cols, h.cols
            )));
        }
        for m in [&v, &h] {
            if !m.is_finite() {
                return Err(LossError::DimensionMismatch(
                    "non-finite embedding entries".into(),
                ));
            }
            for r in 0..m.rows {
                if (norm(m.row(r)) - 1.0).abs() > 1e-6 {
                    return Err(LossError::DimensionMismatch(format!(
                        "row {r} is not unit-norm"
                    )));
                }
            }
        }
        Ok(EmbeddingSpace { v, h })
    }

    pub fn dimension(&self) -> usize {
        self.v.cols
    }
}

/// Cosine similarity; symmetric and invariant to positive scaling.
pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64, LossError> {
    if x.len() != y.len() {
        return Err(LossError::DimensionMismatch(format!(
            "{} vs {}",
            x.len(),
            y.len()
        )));
    }
    let (nx, ny) = (norm(x), norm(y));
    if nx == 0.0 || ny == 0.0 {
        return Err(LossError::ZeroVector);
    }
    Ok(dot(x, y) / (nx * ny))
}

#[inline]
fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

/// Hardest (most similar) non-ground-truth candidate; ties go to the lowest index.
fn hardest_negative(row: &[f64], gt: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for p in 0..row.len() {
        if p == gt {
            continue;
        }
        if best.is_none_or(|b| row[p] > row[b]) {
            best = Some(p);
        }
    }
    best
}

/// Single-direction triplet loss for one query.
pub fn triplet_loss(row: &[f64], gt: usize, margin: f64, mode: TripletMode) -> f64 {
    assert!(gt < row.len(), "ground truth index out of range");
    match mode {
        TripletMode::Sum => {
            let mut total = 0.0;
            for (p, &s) in row.iter().enumerate() {
                if p != gt {
                    total += hinge(margin - row[gt] + s);
                }
            }
            total
        }
        TripletMode::Hardest => match hardest_negative(row, gt) {
            Some(p) => hinge(margin - row[gt] + row[p]),
            None => 0.0,
        },
    }
}

/// Both-direction triplet loss for one query.
pub fn full_triplet_loss(
    row_vh: &[f64],
    row_hv: &[f64],
    gt: usize,
    margin: f64,
    mode: TripletMode,
) -> f64 {
    triplet_loss(row_vh, gt, margin, mode) + triplet_loss(row_hv, gt, margin, mode)
}

/// Enumerates the hinge terms of the ladder loss for one query as
/// `(positive index, negative index, weight, hinge argument)`.
///
/// The level-1 positive is the ground truth; negatives are every non-ground-
/// truth candidate in ascending index order, so a two-level config with
/// `weights[1] == 0` enumerates exactly the triplet-sum terms. Levels whose
/// weight is zero or whose sides are empty contribute nothing.
fn for_each_hinge<S, F>(
    sim: S,
    n: usize,
    part: &LevelPartition,
    cfg: &LadderConfig,
    mut visit: F,
) -> Result<(), LossError>
where
    S: Fn(usize) -> f64,
    F: FnMut(usize, usize, f64, f64),
{
    if part.level_count() != cfg.level_count() {
        return Err(LossError::PartitionMismatch {
            expected: cfg.level_count(),
            got: part.level_count(),
        });
    }
    let gt = part.ground_truth;
    let s_gt = sim(gt);
    if cfg.weights[0] != 0.0 {
        match cfg.sampling {
            SamplingMode::FullSum => {
                for p in 0..n {
                    if p != gt {
                        visit(gt, p, cfg.weights[0], cfg.margins[0] - s_gt + sim(p));
                    }
                }
            }
            SamplingMode::HardContrastive => {
                let mut best: Option<usize> = None;
                for p in 0..n {
                    if p == gt {
                        continue;
                    }
                    if best.is_none_or(|b| sim(p) > sim(b)) {
                        best = Some(p);
                    }
                }
                if let Some(p) = best {
                    visit(gt, p, cfg.weights[0], cfg.margins[0] - s_gt + sim(p));
                }
            }
        }
    }
    for l in 2..=cfg.level_count() {
        let weight = cfg.weights[l - 1];
        if weight == 0.0 {
            continue;
        }
        let margin = cfg.margins[l - 1];
        let upper = &part.levels[l - 2];
        let lower = part.tail_union(l);
        if upper.is_empty() || lower.is_empty() {
            continue; // an unpopulated level contributes nothing
        }
        match cfg.sampling {
            SamplingMode::FullSum => {
                for &i in upper {
                    for &j in &lower {
                        visit(i, j, weight, margin - sim(i) + sim(j));
                    }
                }
            }
            SamplingMode::HardContrastive => {
                let i_star = *upper
                    .iter()
                    .min_by(|&&a, &&b| sim(a).partial_cmp(&sim(b)).unwrap())
                    .unwrap();
                let j_star = *lower
                    .iter()
                    .max_by(|&&a, &&b| {
                        sim(a).partial_cmp(&sim(b)).unwrap().then(b.cmp(&a))
                    })
                    .unwrap();
                visit(i_star, j_star, weight, margin - sim(i_star) + sim(j_star));
            }
        }
    }
    Ok(())
}

fn ladder_loss_with(
    row: &[f64],
    part: &LevelPartition,
    cfg: &LadderConfig,
    sampling: SamplingMode,
) -> Result<f64, LossError> {
    let cfg = LadderConfig {
        sampling,
        ..cfg.clone()
    };
    let mut total = 0.0;
    for_each_hinge(|p| row[p], row.len(), part, &cfg, |_, _, w, arg| {
        total += w * hinge(arg);
    })?;
    Ok(total)
}

/// Single-direction full-sum ladder loss for one query.
pub fn ladder_loss(
    row: &[f64],
    part: &LevelPartition,
    cfg: &LadderConfig,
) -> Result<f64, LossError> {
    ladder_loss_with(row, part, cfg, SamplingMode::FullSum)
}

/// Single-direction hard-contrastive ladder loss for one query.
pub fn ladder_loss_hc(
    row: &[f64],
    part: &LevelPartition,
    cfg: &LadderConfig,
) -> Result<f64, LossError> {
    ladder_loss_with(row, part, cfg, SamplingMode::HardContrastive)
}

/// Hardest contrastive pair `(i*, j*)` for level `l >= 2`: `i*` is the least
/// similar member of level `l-1`, `j*` the most similar member of levels
/// `l..L`. Ties break toward the lowest index.
pub fn hard_contrastive_pair(
    row: &[f64],
    part: &LevelPartition,
    l: usize,
) -> Result<(usize, usize), LossError> {
    assert!(l >= 2 && l <= part.level_count(), "level out of range");
    let upper = &part.levels[l - 2];
    let lower = part.tail_union(l);
    if upper.is_empty() {
        return Err(LossError::EmptyLevel { level: l - 1 });
    }
    if lower.is_empty() {
        return Err(LossError::EmptyLevel { level: l });
    }
    let i_star = *upper
        .iter()
        .min_by(|&&a, &&b| row[a].partial_cmp(&row[b]).unwrap())
        .unwrap();
    let j_star = *lower
        .iter()
        .max_by(|&&a, &&b| row[a].partial_cmp(&row[b]).unwrap().then(b.cmp(&a)))
        .unwrap();
    Ok((i_star, j_star))
}

/// Both-direction ladder loss for one query, each direction with its own
/// partition; sampling mode taken from the config.
pub fn full_ladder_loss(
    row_vh: &[f64],
    part_vh: &LevelPartition,
    row_hv: &[f64],
    part_hv: &LevelPartition,
    cfg: &LadderConfig,
) -> Result<f64, LossError> {
    Ok(ladder_loss_with(row_vh, part_vh, cfg, cfg.sampling)?
        + ladder_loss_with(row_hv, part_hv, cfg, cfg.sampling)?)
}

fn normalize_rows(m: &Mat) -> Result<(Mat, Vec<f64>), LossError> {
    let mut unit = m.clone();
    let mut norms = Vec::with_capacity(m.rows);
    for r in 0..m.rows {
        let nr = norm(m.row(r));
        if nr == 0.0 {
            return Err(LossError::ZeroVector);
        }
        for v in unit.row_mut(r) {
            *v /= nr;
        }
        norms.push(nr);
    }
    Ok((unit, norms))
}

/// Total both-direction loss over an index-aligned batch.
///
/// Rows of `v` and `h` need not be unit-norm; similarities are full cosines.
/// `parts_vh[q]` partitions candidates of modality `h` for query `v_q`, and
/// `parts_hv[q]` the reverse direction.
pub fn batch_loss(
    v: &Mat,
    h: &Mat,
    parts_vh: &[LevelPartition],
    parts_hv: &[LevelPartition],
    cfg: &LadderConfig,
) -> Result<f64, LossError> {
    let (uv, _) = normalize_rows(v)?;
    let (uh, _) = normalize_rows(h)?;
    let s = uv.row_dots(&uh);
    let b = v.rows;
    let mut total = 0.0;
    for q in 0..b {
        for_each_hinge(|p| s.get(q, p), b, &parts_vh[q], cfg, |_, _, w, arg| {
            total += w * hinge(arg);
        })?;
        for_each_hinge(|p| s.get(p, q), b, &parts_hv[q], cfg, |_, _, w, arg| {
            total += w * hinge(arg);
        })?;
    }
    Ok(total)
}

/// Snapshot of every hinge term of [`batch_loss`]: the selected index pairs
/// with their activity, plus the smallest absolute hinge argument. Two
/// parameter points with equal snapshots lie on the same smooth piece of the
/// loss, which is what a finite-difference probe needs.
pub fn hinge_activity(
    v: &Mat,
    h: &Mat,
    parts_vh: &[LevelPartition],
    parts_hv: &[LevelPartition],
    cfg: &LadderConfig,
) -> Result<(Vec<(usize, usize, bool)>, f64), LossError> {
    let (uv, _) = normalize_rows(v)?;
    let (uh, _) = normalize_rows(h)?;
    let s = uv.row_dots(&uh);
    let b = v.rows;
    let mut signature = Vec::new();
    let mut min_gap = f64::INFINITY;
    for q in 0..b {
        for_each_hinge(|p| s.get(q, p), b, &parts_vh[q], cfg, |pos, neg, _, arg| {
            signature.push((pos, neg, arg > 0.0));
            min_gap = min_gap.min(arg.abs());
        })?;
        for_each_hinge(|p| s.get(p, q), b, &parts_hv[q], cfg, |pos, neg, _, arg| {
            signature.push((pos, neg, arg > 0.0));
            min_gap = min_gap.min(arg.abs());
        })?;
    }
    Ok((signature, min_gap))
}

/// Analytic gradient of [`batch_loss`] with respect to the raw (pre-
/// normalization) rows of `v` and `h`. The hinge subgradient at exactly zero
/// is taken as zero.
pub fn loss_gradient(
    v: &Mat,
    h: &Mat,
    parts_vh: &[LevelPartition],
    parts_hv: &[LevelPartition],
    cfg: &LadderConfig,
) -> Result<(Mat, Mat), LossError> {
    if v.rows != h.rows {
        return Err(LossError::DimensionMismatch(format!(
            "batch sizes differ: {} vs {}",
            v.rows, h.rows
        )));
    }
    let (uv, nv) = normalize_rows(v)?;
    let (uh, nh) = normalize_rows(h)?;
    let s = uv.row_dots(&uh);
    let b = v.rows;
    let d = v.cols;
    let mut gv = Mat::zeros(b, d);
    let mut gh = Mat::zeros(b, d);

    // d cos(v_q, h_p) / d v_q = (u_h[p] - s * u_v[q]) / |v_q|, symmetric in h_p.
    let add_pair = |gv: &mut Mat, gh: &mut Mat, q: usize, p: usize, c: f64| {
        let sqp = s.get(q, p);
        {
            let (uq, up) = (uv.row(q), uh.row(p));
            let gq = gv.row_mut(q);
            for k in 0..d {
                gq[k] += c * (up[k] - sqp * uq[k]) / nv[q];
            }
            let gp = gh.row_mut(p);
            for k in 0..d {
                gp[k] += c * (uq[k] - sqp * up[k]) / nh[p];
            }
        }
    };

    for q in 0..b {
        // direction v -> h: query row q of s
        let mut terms: Vec<(usize, usize, f64)> = Vec::new();
        for_each_hinge(|p| s.get(q, p), b, &parts_vh[q], cfg, |pos, neg, w, arg| {
            if arg > 0.0 {
                terms.push((pos, neg, w));
            }
        })?;
        for (pos, neg, w) in terms {
            add_pair(&mut gv, &mut gh, q, neg, w);
            add_pair(&mut gv, &mut gh, q, pos, -w);
        }
        // direction h -> v: query column q of s
        let mut terms: Vec<(usize, usize, f64)> = Vec::new();
        for_each_hinge(|p| s.get(p, q), b, &parts_hv[q], cfg, |pos, neg, w, arg| {
            if arg > 0.0 {
                terms.push((pos, neg, w));
            }
        })?;
        for (pos, neg, w) in terms {
            add_pair(&mut gv, &mut gh, neg, q, w);
            add_pair(&mut gv, &mut gh, pos, q, -w);
        }
    }
    Ok((gv, gh))
}
