//! Continuous relevance degrees between reference texts and level partitioning.
//!
//! The relevance degree between a query and a candidate item is computed from
//! their reference texts: a cheap bag-of-words cosine for every pair, optionally
//! refined by a precomputed fine score whenever the coarse value clears a
//! threshold. Per-query relevance rows are then binned into `L` ordered levels
//! by a strictly decreasing threshold sequence.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat::{dot, norm, Mat};

#[derive(Debug, Error)]
pub enum RelevanceError {
    #[error("no token of the sequence is present in the word-vector table (query {query}, candidate {candidate})")]
    NoKnownTokens { query: usize, candidate: usize },
    #[error("coarse score {coarse} exceeds threshold {threshold} but no fine score exists for pair ({query}, {candidate})")]
    MissingFineScore {
        query: usize,
        candidate: usize,
        coarse: f64,
        threshold: f64,
    },
    #[error("thresholds must be strictly decreasing, got {0:?}")]
    NonMonotoneThresholds(Vec<f64>),
    #[error("token sequence averages to the zero vector")]
    ZeroMeanVector,
    #[error("empty token sequence")]
    EmptySequence,
    #[error("word-vector table error: {0}")]
    Table(String),
    #[error("fine-score file error: {0}")]
    FineScores(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Ordered lowercase word tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<String>,
}

impl TokenSequence {
    /// Lowercases and splits on runs of non-alphanumeric characters.
    pub fn tokenize(text: &str) -> Result<Self, RelevanceError> {
        let tokens: Vec<String> = text
            .to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_owned)
            .collect();
        if tokens.is_empty() {
            return Err(RelevanceError::EmptySequence);
        }
        Ok(TokenSequence { tokens })
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, RelevanceError> {
        if tokens.is_empty() || tokens.iter().any(|t| t.chars().any(char::is_whitespace)) {
            return Err(RelevanceError::EmptySequence);
        }
        Ok(TokenSequence { tokens })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Token to vector lookup with a fixed dimension.
#[derive(Debug, Clone)]
pub struct WordVectorTable {
    dimension: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl WordVectorTable {
    pub fn new(entries: HashMap<String, Vec<f64>>) -> Result<Self, RelevanceError> {
        let dimension = entries
            .values()
            .next()
            .map(Vec::len)
            .ok_or_else(|| RelevanceError::Table("empty table".into()))?;
        if dimension == 0 || entries.values().any(|v| v.len() != dimension) {
            return Err(RelevanceError::Table(
                "all vectors must share one positive dimension".into(),
            ));
        }
        Ok(WordVectorTable { dimension, entries })
    }

    /// Parses the text format: one `token v1 v2 ... vd` entry per line.
    pub fn from_path(path: &Path) -> Result<Self, RelevanceError> {
        let file = std::fs::File::open(path).map_err(|source| RelevanceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut entries = HashMap::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| RelevanceError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts
                .next()
                .ok_or_else(|| RelevanceError::Table(format!("line {}: empty", lineno + 1)))?;
            let vector: Vec<f64> = parts
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| RelevanceError::Table(format!("line {}: {e}", lineno + 1)))?;
            entries.insert(token.to_owned(), vector);
        }
        WordVectorTable::new(entries)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }
}

/// Score scale tag for a relevance matrix; higher is always more relevant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceScale {
    /// Cosine-like scores in `[-1, 1]`.
    Cosine,
    /// Scores in `[0, 1]`.
    Unit,
    /// Uninterpreted scores.
    Raw,
}

impl fmt::Display for RelevanceScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelevanceScale::Cosine => write!(f, "cosine"),
            RelevanceScale::Unit => write!(f, "unit"),
            RelevanceScale::Raw => write!(f, "raw"),
        }
    }
}

/// Continuous query-candidate relevance degrees. Rows are queries, columns
/// candidates; the ground-truth column attains each row's maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMatrix {
    pub values: Mat,
    pub scale: RelevanceScale,
}

impl RelevanceMatrix {
    pub fn n_queries(&self) -> usize {
        self.values.rows
    }

    pub fn row(&self, q: usize) -> &[f64] {
        self.values.row(q)
    }
}

/// One query's candidate indices split into `L` disjoint relevance levels,
/// most relevant first, with the ground-truth index excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelPartition {
    pub levels: Vec<Vec<usize>>,
    pub ground_truth: usize,
}

impl LevelPartition {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// Union of levels `l..L` (1-based `l`), in ascending index order.
    pub fn tail_union(&self, l: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.levels[l - 1..].iter().flatten().copied().collect();
        out.sort_unstable();
        out
    }
}

/// Precomputed fine scores keyed by `(query, candidate)` index pairs.
#[derive(Debug, Clone, Default)]
pub struct FineScores {
    scores: HashMap<(usize, usize), f64>,
}

impl FineScores {
    pub fn new(scores: HashMap<(usize, usize), f64>) -> Self {
        FineScores { scores }
    }

    /// Parses the text format: one `query_index candidate_index score` triple per line.
    pub fn from_path(path: &Path) -> Result<Self, RelevanceError> {
        let file = std::fs::File::open(path).map_err(|source| RelevanceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut scores = HashMap::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| RelevanceError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(RelevanceError::FineScores(format!(
                    "line {}: expected `query candidate score`",
                    lineno + 1
                )));
            }
            let q: usize = parts[0].parse().map_err(|e| {
                RelevanceError::FineScores(format!("line {}: {e}", lineno + 1))
            })?;
            let p: usize = parts[1].parse().map_err(|e| {
                RelevanceError::FineScores(format!("line {}: {e}", lineno + 1))
            })?;
            let s: f64 = parts[2].parse().map_err(|e| {
                RelevanceError::FineScores(format!("line {}: {e}", lineno + 1))
            })?;
            scores.insert((q, p), s);
        }
        Ok(FineScores { scores })
    }

    pub fn get(&self, query: usize, candidate: usize) -> Option<f64> {
        self.scores.get(&(query, candidate)).copied()
    }
}

fn mean_vector(seq: &TokenSequence, table: &WordVectorTable) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; table.dimension()];
    let mut known = 0usize;
    for token in seq.tokens() {
        if let Some(v) = table.get(token) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
            known += 1;
        }
    }
    if known == 0 {
        return None;
    }
    for a in &mut acc {
        *a /= known as f64;
    }
    Some(acc)
}

/// Cosine similarity of the two sequences' mean word vectors, skipping
/// unknown tokens. Symmetric and bounded in `[-1, 1]`.
pub fn cbow_relevance(
    a: &TokenSequence,
    b: &TokenSequence,
    table: &WordVectorTable,
) -> Result<f64, RelevanceError> {
    let va = mean_vector(a, table).ok_or(RelevanceError::NoKnownTokens {
        query: 0,
        candidate: 0,
    })?;
    let vb = mean_vector(b, table).ok_or(RelevanceError::NoKnownTokens {
        query: 0,
        candidate: 0,
    })?;
    let (na, nb) = (norm(&va), norm(&vb));
    if na == 0.0 || nb == 0.0 {
        return Err(RelevanceError::ZeroMeanVector);
    }
    Ok((dot(&va, &vb) / (na * nb)).clamp(-1.0, 1.0))
}

/// Keeps the coarse score unless it clears `threshold` and a fine score is
/// available, in which case the fine score replaces it.
pub fn coarse_to_fine(
    coarse: f64,
    fine: Option<f64>,
    threshold: f64,
    fine_required: bool,
) -> Result<f64, RelevanceError> {
    if coarse > threshold {
        match fine {
            Some(f) => Ok(f),
            None if fine_required => Err(RelevanceError::MissingFineScore {
                query: 0,
                candidate: 0,
                coarse,
                threshold,
            }),
            None => Ok(coarse),
        }
    } else {
        Ok(coarse)
    }
}

/// Builds the full relevance matrix from per-item reference texts.
///
/// Items may carry several reference texts; a candidate scores the maximum
/// over its texts against the query's first text. Diagonal entries are forced
/// to the row maximum so the paired item is always the most relevant.
pub fn build_relevance_matrix(
    texts: &[Vec<String>],
    table: &WordVectorTable,
    threshold: f64,
    fine: Option<&FineScores>,
    fine_required: bool,
) -> Result<RelevanceMatrix, RelevanceError> {
    let n = texts.len();
    let sequences: Vec<Vec<TokenSequence>> = texts
        .iter()
        .map(|item| item.iter().map(|t| TokenSequence::tokenize(t)).collect())
        .collect::<Result<_, _>>()?;
    let mut values = Mat::zeros(n, n);
    for q in 0..n {
        let t_q = &sequences[q][0];
        for p in 0..n {
            let mut coarse = f64::NEG_INFINITY;
            for t_p in &sequences[p] {
                let s = cbow_relevance(t_q, t_p, table).map_err(|e| match e {
                    RelevanceError::NoKnownTokens { .. } => RelevanceError::NoKnownTokens {
                        query: q,
                        candidate: p,
                    },
                    other => other,
                })?;
                coarse = coarse.max(s);
            }
            let refined = coarse_to_fine(
                coarse,
                fine.and_then(|f| f.get(q, p)),
                threshold,
                fine_required,
            )
            .map_err(|e| match e {
                RelevanceError::MissingFineScore {
                    coarse, threshold, ..
                } => RelevanceError::MissingFineScore {
                    query: q,
                    candidate: p,
                    coarse,
                    threshold,
                },
                other => other,
            })?;
            values.set(q, p, refined);
        }
        let row_max = values
            .row(q)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        values.set(q, q, row_max);
    }
    Ok(RelevanceMatrix {
        values,
        scale: RelevanceScale::Cosine,
    })
}

/// Partitions one query's candidates into `thresholds.len() + 1` relevance
/// levels. A degree exactly equal to a threshold joins the higher level; the
/// ground-truth index is excluded.
pub fn bin_candidates(
    row: &[f64],
    ground_truth: usize,
    thresholds: &[f64],
) -> Result<LevelPartition, RelevanceError> {
    if thresholds.windows(2).any(|w| w[0] <= w[1]) {
        return Err(RelevanceError::NonMonotoneThresholds(thresholds.to_vec()));
    }
    assert!(ground_truth < row.len(), "ground truth index out of range");
    let l_count = thresholds.len() + 1;
    let mut levels = vec![Vec::new(); l_count];
    for (p, &r) in row.iter().enumerate() {
        if p == ground_truth {
            continue;
        }
        let level = thresholds.iter().position(|&t| r >= t).unwrap_or(l_count - 1);
        levels[level].push(p);
    }
    Ok(LevelPartition {
        levels,
        ground_truth,
    })
}
