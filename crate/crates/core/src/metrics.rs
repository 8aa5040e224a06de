//! Retrieval metrics: Kendall's tau-b, the per-query coherence score CS@K,
//! Recall@K and mean rank, aggregated per retrieval direction.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::EmbeddingSpace;
use crate::relevance::RelevanceMatrix;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("degenerate input: a constant vector has no rank order")]
    DegenerateInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 elements, got {0}")]
    TooShort(usize),
    #[error("K = {k} exceeds the {n} available candidates")]
    KTooLarge { k: usize, n: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("report parse error: {0}")]
    Parse(String),
}

/// Kendall's tau-b rank correlation with tie correction:
/// `(C - D) / sqrt((C + D + Tx)(C + D + Ty))` where `Tx`/`Ty` count pairs
/// tied only in `x` / only in `y`.
///
/// Uses the sort-and-merge formulation (Knight's algorithm), O(n log n).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let n = x.len();
    if n != y.len() {
        return Err(MetricsError::LengthMismatch(n, y.len()));
    }
    if n < 2 {
        return Err(MetricsError::TooShort(n));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let pair_count = |t: u64| t * (t - 1) / 2;
    // tie counts in x and joint ties, scanning runs of the (x, y)-sorted order
    let mut xtie = 0u64;
    let mut joint_tie = 0u64;
    let mut run_x = 1u64;
    let mut run_xy = 1u64;
    for w in 1..n {
        if x[idx[w]] == x[idx[w - 1]] {
            run_x += 1;
            if y[idx[w]] == y[idx[w - 1]] {
                run_xy += 1;
            } else {
                joint_tie += pair_count(run_xy);
                run_xy = 1;
            }
        } else {
            xtie += pair_count(run_x);
            joint_tie += pair_count(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    xtie += pair_count(run_x);
    joint_tie += pair_count(run_xy);

    // count discordant pairs as strict inversions of y in x-order via merge sort
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let discordant = merge_count_inversions(&mut ys);

    // y ties over the now-sorted ys
    let mut ytie = 0u64;
    let mut run_y = 1u64;
    for w in 1..n {
        if ys[w] == ys[w - 1] {
            run_y += 1;
        } else {
            ytie += pair_count(run_y);
            run_y = 1;
        }
    }
    ytie += pair_count(run_y);

    let total = pair_count(n as u64);
    let denom_x = total - xtie; // C + D + (ties only in y)
    let denom_y = total - ytie; // C + D + (ties only in x)
    if denom_x == 0 || denom_y == 0 {
        return Err(MetricsError::DegenerateInput);
    }
    let con_minus_dis =
        total as i128 - xtie as i128 - ytie as i128 + joint_tie as i128 - 2 * discordant as i128;
    let tau = con_minus_dis as f64 / ((denom_x as f64).sqrt() * (denom_y as f64).sqrt());
    Ok(tau.clamp(-1.0, 1.0))
}

/// Stable merge sort counting strict inversions (`a[i] > a[j]` for `i < j`).
fn merge_count_inversions(a: &mut [f64]) -> u64 {
    let n = a.len();
    if n < 2 {
        return 0;
    }
    let mut buf = a.to_vec();
    let mut count = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            if mid < hi {
                let (mut i, mut j, mut k) = (lo, mid, lo);
                while i < mid && j < hi {
                    if a[j] < a[i] {
                        count += (mid - i) as u64;
                        buf[k] = a[j];
                        j += 1;
                    } else {
                        buf[k] = a[i];
                        i += 1;
                    }
                    k += 1;
                }
                buf[k..hi].copy_from_slice(if i < mid { &a[i..mid] } else { &a[j..hi] });
                a[lo..hi].copy_from_slice(&buf[lo..hi]);
            }
            lo += 2 * width;
        }
        width *= 2;
    }
    count
}

/// Candidate indices ordered by descending similarity, ties to the lower index.
pub fn ranking_order(similarities: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..similarities.len()).collect();
    idx.sort_by(|&a, &b| similarities[b].total_cmp(&similarities[a]).then(a.cmp(&b)));
    idx
}

/// CS@K: Kendall's tau-b between the similarities and relevance degrees of
/// the top-K retrieved candidates.
pub fn coherent_score(
    similarities: &[f64],
    relevances: &[f64],
    k: usize,
) -> Result<f64, MetricsError> {
    let n = similarities.len();
    if n != relevances.len() {
        return Err(MetricsError::LengthMismatch(n, relevances.len()));
    }
    if k > n {
        return Err(MetricsError::KTooLarge { k, n });
    }
    if k < 2 {
        return Err(MetricsError::TooShort(k));
    }
    let order = ranking_order(similarities);
    let top: Vec<f64> = order[..k].iter().map(|&i| similarities[i]).collect();
    let rel: Vec<f64> = order[..k].iter().map(|&i| relevances[i]).collect();
    kendall_tau(&top, &rel)
}

/// Percentage of queries whose ground-truth rank is within K. Ranks are
/// 1-based.
pub fn recall_at_k(ranks: &[usize], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    let hits = ranks.iter().filter(|&&r| r <= k).count();
    100.0 * hits as f64 / ranks.len() as f64
}

/// Arithmetic mean of 1-based ground-truth ranks.
pub fn mean_rank(ranks: &[usize]) -> f64 {
    assert!(!ranks.is_empty());
    ranks.iter().sum::<usize>() as f64 / ranks.len() as f64
}

/// Per-direction metric aggregates with per-query CS breakdowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub direction: String,
    /// Mean CS@K over queries with a defined score, per configured K.
    pub cs_mean: BTreeMap<usize, f64>,
    /// Per-query CS@K values; `None` marks degenerate (constant-input) queries.
    pub cs_per_query: BTreeMap<usize, Vec<Option<f64>>>,
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub mean_rank: f64,
    pub n_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub directions: Vec<DirectionReport>,
}

impl EvalReport {
    pub fn direction(&self, name: &str) -> Option<&DirectionReport> {
        self.directions.iter().find(|d| d.direction == name)
    }

    /// Mean over both directions of the mean CS@K, ignoring directions where
    /// every query was degenerate.
    pub fn cs_mean_over_directions(&self, k: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .directions
            .iter()
            .filter_map(|d| d.cs_mean.get(&k).copied())
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

fn direction_report(
    name: &str,
    sim_rows: &[Vec<f64>],
    relevance: &RelevanceMatrix,
    ks: &[usize],
) -> DirectionReport {
    let n = sim_rows.len();
    let mut ranks = Vec::with_capacity(n);
    let mut cs_per_query: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
    for &k in ks {
        cs_per_query.insert(k, Vec::with_capacity(n));
    }
    for (q, row) in sim_rows.iter().enumerate() {
        let order = ranking_order(row);
        let rank = order.iter().position(|&p| p == q).unwrap() + 1;
        ranks.push(rank);
        let rel_row = relevance.row(q);
        for &k in ks {
            let cs = coherent_score(row, rel_row, k).ok();
            cs_per_query.get_mut(&k).unwrap().push(cs);
        }
    }
    let mut cs_mean = BTreeMap::new();
    for (&k, vals) in &cs_per_query {
        let defined: Vec<f64> = vals.iter().flatten().copied().collect();
        if !defined.is_empty() {
            cs_mean.insert(k, defined.iter().sum::<f64>() / defined.len() as f64);
        }
    }
    DirectionReport {
        direction: name.to_string(),
        cs_mean,
        cs_per_query,
        r1: recall_at_k(&ranks, 1),
        r5: recall_at_k(&ranks, 5),
        r10: recall_at_k(&ranks, 10),
        mean_rank: mean_rank(&ranks),
        n_queries: n,
    }
}

/// Evaluates both retrieval directions of an embedding space against a
/// relevance matrix. Per-query degenerate CS values are excluded from means
/// without aborting the report.
pub fn evaluate(
    space: &EmbeddingSpace,
    relevance: &RelevanceMatrix,
    ks: &[usize],
) -> Result<EvalReport, MetricsError> {
    let n = space.v.rows;
    if space.h.rows != n || relevance.n_queries() != n || relevance.values.cols != n {
        return Err(MetricsError::DimensionMismatch(format!(
            "embeddings {}x{} vs relevance {}x{}",
            space.v.rows,
            space.h.rows,
            relevance.n_queries(),
            relevance.values.cols
        )));
    }
    for &k in ks {
        if k > n {
            return Err(MetricsError::KTooLarge { k, n });
        }
    }
    let s = space.v.row_dots(&space.h);
    let rows_x2y: Vec<Vec<f64>> = (0..n).map(|q| s.row(q).to_vec()).collect();
    let rows_y2x: Vec<Vec<f64>> = (0..n)
        .map(|q| (0..n).map(|p| s.get(p, q)).collect())
        .collect();
    Ok(EvalReport {
        directions: vec![
            direction_report("x_to_y", &rows_x2y, relevance, ks),
            direction_report("y_to_x", &rows_y2x, relevance, ks),
        ],
    })
}

/// One flattened report row per `(direction, K)` pair; the machine-readable
/// serialization unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub direction: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub cs_mean: Option<f64>,
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub mean_rank: f64,
    pub n_queries: usize,
}

impl EvalReport {
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut out = Vec::new();
        for d in &self.directions {
            for (&k, _) in &d.cs_per_query {
                out.push(ReportRow {
                    direction: d.direction.clone(),
                    k,
                    cs_mean: d.cs_mean.get(&k).copied(),
                    r1: d.r1,
                    r5: d.r5,
                    r10: d.r10,
                    mean_rank: d.mean_rank,
                    n_queries: d.n_queries,
                });
            }
        }
        out
    }

    /// Flat `key = value` rendering for humans.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for d in &self.directions {
            for (k, cs) in &d.cs_mean {
                out.push_str(&format!("{}.cs@{} = {:.6}\n", d.direction, k, cs));
            }
            out.push_str(&format!("{}.r1 = {:.2}\n", d.direction, d.r1));
            out.push_str(&format!("{}.r5 = {:.2}\n", d.direction, d.r5));
            out.push_str(&format!("{}.r10 = {:.2}\n", d.direction, d.r10));
            out.push_str(&format!("{}.mean_rank = {:.2}\n", d.direction, d.mean_rank));
            out.push_str(&format!("{}.n_queries = {}\n", d.direction, d.n_queries));
        }
        out
    }
}

pub fn write_report_rows(rows: &[ReportRow], path: &Path) -> Result<(), MetricsError> {
    let json = serde_json::to_string_pretty(rows)
        .map_err(|e| MetricsError::Parse(e.to_string()))?;
    std::fs::write(path, json).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_report_rows(path: &Path) -> Result<Vec<ReportRow>, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| MetricsError::Parse(e.to_string()))
}

/// Definitional O(n^2) tau-b pair count. Test oracle; kept independent of
/// [`kendall_tau`]'s sort-and-merge path.
pub fn kendall_tau_pair_count_oracle(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let n = x.len();
    if n != y.len() {
        return Err(MetricsError::LengthMismatch(n, y.len()));
    }
    if n < 2 {
        return Err(MetricsError::TooShort(n));
    }
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                // joint tie: counted in neither correction term
            } else if dx == 0.0 {
                tx += 1;
            } else if dy == 0.0 {
                ty += 1;
            } else if dx * dy > 0.0 {
                c += 1;
            } else {
                d += 1;
            }
        }
    }
    let denom = (((c + d + tx) as f64) * ((c + d + ty) as f64)).sqrt();
    if denom == 0.0 {
        return Err(MetricsError::DegenerateInput);
    }
    Ok((c - d) as f64 / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tau_perfect_and_reversed() {
        let x = [1.0f64, 2.0, 3.0, 4.0];
        let inc: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        assert_abs_diff_eq!(kendall_tau(&x, &inc).unwrap(), 1.0, epsilon = 1e-12);
        let rev = [4.0, 3.0, 2.0, 1.0];
        assert_abs_diff_eq!(kendall_tau(&x, &rev).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn tau_hand_counted_case() {
        // pairs: (1,3),(1,2),(1,4),(3,2),(3,4),(2,4) -> C=5, D=1 -> 4/6
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        assert_abs_diff_eq!(kendall_tau(&x, &y).unwrap(), 4.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn tau_constant_input_degenerate() {
        assert!(matches!(
            kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(MetricsError::DegenerateInput)
        ));
    }

    #[test]
    fn tau_matches_oracle_on_small_permutations() {
        // all 120 permutations of n=5 against a fixed reference
        let reference = [0.0, 1.0, 2.0, 3.0, 4.0];
        let mut perm = [0usize, 1, 2, 3, 4];
        permute(&mut perm, 0, &mut |p| {
            let y: Vec<f64> = p.iter().map(|&i| i as f64).collect();
            let got = kendall_tau(&reference, &y).unwrap();
            let want = kendall_tau_pair_count_oracle(&reference, &y).unwrap();
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        });
    }

    fn permute(arr: &mut [usize], k: usize, f: &mut impl FnMut(&[usize])) {
        if k == arr.len() {
            f(arr);
            return;
        }
        for i in k..arr.len() {
            arr.swap(k, i);
            permute(arr, k + 1, f);
            arr.swap(k, i);
        }
    }

    #[test]
    fn tau_matches_oracle_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let n = rng.random_range(2..20);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
            match (
                kendall_tau(&x, &y),
                kendall_tau_pair_count_oracle(&x, &y),
            ) {
                (Ok(a), Ok(b)) => assert_abs_diff_eq!(a, b, epsilon = 1e-12),
                (Err(_), Err(_)) => {}
                (a, b) => panic!("disagreement: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn coherent_score_extremes() {
        let sim = [0.9, 0.1, 0.5, 0.3];
        assert_abs_diff_eq!(coherent_score(&sim, &sim, 4).unwrap(), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = sim.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(
            coherent_score(&sim, &neg, 4).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn coherent_score_random_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 200;
        let mut sum = 0.0;
        let queries = 1000;
        for _ in 0..queries {
            let sim: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let rel: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            sum += coherent_score(&sim, &rel, 100).unwrap();
        }
        assert!((sum / queries as f64).abs() < 0.05);
    }

    #[test]
    fn recall_and_mean_rank_examples() {
        assert_eq!(recall_at_k(&[1, 1, 1], 1), 100.0);
        assert_eq!(recall_at_k(&[1, 6, 2, 11], 5), 50.0);
        assert_eq!(recall_at_k(&[20, 30], 10), 0.0);
        assert_eq!(mean_rank(&[1, 1, 1]), 1.0);
        assert_eq!(mean_rank(&[1, 3]), 2.0);
    }

    #[test]
    fn evaluate_identity_structure_is_perfect() {
        use crate::mat::Mat;
        use crate::relevance::{RelevanceMatrix, RelevanceScale};
        // orthonormal matched embeddings: sim matrix is the identity
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let space = crate::loss::EmbeddingSpace::new(
            Mat::from_rows(rows.clone()),
            Mat::from_rows(rows),
        )
        .unwrap();
        // relevance equal to similarity: identity plus small off-diagonal order
        let mut rel = Mat::zeros(4, 4);
        for q in 0..4 {
            for p in 0..4 {
                rel.set(q, p, if p == q { 1.0 } else { 0.0 });
            }
        }
        let relevance = RelevanceMatrix {
            values: rel,
            scale: RelevanceScale::Unit,
        };
        let report = evaluate(&space, &relevance, &[4]).unwrap();
        for d in &report.directions {
            assert_eq!(d.r1, 100.0);
            assert_eq!(d.mean_rank, 1.0);
            // similarity 1/0 vs relevance 1/0 over top-4 is perfectly concordant
            // up to joint ties among the zeros
            assert_abs_diff_eq!(d.cs_mean[&4], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn evaluate_matches_brute_force_script() {
        use crate::mat::Mat;
        use crate::relevance::{RelevanceMatrix, RelevanceScale};
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 5;
        let d = 3;
        let mut make = || {
            let mut m = Mat::zeros(n, d);
            for r in 0..n {
                let mut row: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let nr = crate::mat::norm(&row);
                for v in &mut row {
                    *v /= nr;
                }
                m.row_mut(r).copy_from_slice(&row);
            }
            m
        };
        let v = make();
        let h = make();
        let mut rel = Mat::zeros(n, n);
        for q in 0..n {
            for p in 0..n {
                rel.set(q, p, rng.random_range(0.0..0.9));
            }
            rel.set(q, q, 1.0);
        }
        let relevance = RelevanceMatrix {
            values: rel.clone(),
            scale: RelevanceScale::Unit,
        };
        let space = crate::loss::EmbeddingSpace::new(v.clone(), h.clone()).unwrap();
        let report = evaluate(&space, &relevance, &[3]).unwrap();

        // independent brute force for the x -> y direction
        let mut ranks = Vec::new();
        let mut cs_sum = 0.0;
        let mut cs_n = 0;
        for q in 0..n {
            let sims: Vec<f64> = (0..n)
                .map(|p| crate::loss::cosine_similarity(v.row(q), h.row(p)).unwrap())
                .collect();
            let better = (0..n)
                .filter(|&p| sims[p] > sims[q] || (sims[p] == sims[q] && p < q))
                .count();
            ranks.push(better + 1);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
            let top: Vec<f64> = order[..3].iter().map(|&i| sims[i]).collect();
            let r: Vec<f64> = order[..3].iter().map(|&i| rel.get(q, i)).collect();
            if let Ok(t) = kendall_tau_pair_count_oracle(&top, &r) {
                cs_sum += t;
                cs_n += 1;
            }
        }
        let dir = report.direction("x_to_y").unwrap();
        assert_eq!(dir.mean_rank, mean_rank(&ranks));
        assert_eq!(dir.r1, recall_at_k(&ranks, 1));
        assert_abs_diff_eq!(dir.cs_mean[&3], cs_sum / cs_n as f64, epsilon = 1e-12);
    }

    #[test]
    fn report_rows_round_trip() {
        let rows = vec![ReportRow {
            direction: "x_to_y".into(),
            k: 100,
            cs_mean: Some(0.25),
            r1: 40.0,
            r5: 70.0,
            r10: 80.0,
            mean_rank: 3.5,
            n_queries: 200,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        write_report_rows(&rows, &path).unwrap();
        let back = read_report_rows(&path).unwrap();
        assert_eq!(rows, back);
        // exact key spelling on the wire
        let text = std::fs::read_to_string(&path).unwrap();
        for key in ["direction", "\"K\"", "cs_mean", "r1", "r5", "r10", "mean_rank", "n_queries"] {
            assert!(text.contains(key), "missing key {key}");
        }
    }

    proptest! {
        #[test]
        fn tau_symmetric_and_antisymmetric(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..30),
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let (Ok(ab), Ok(ba)) = (kendall_tau(&x, &y), kendall_tau(&y, &x)) {
                prop_assert!((ab - ba).abs() < 1e-12);
                let neg: Vec<f64> = y.iter().map(|v| -v).collect();
                let anti = kendall_tau(&x, &neg).unwrap();
                prop_assert!((ab + anti).abs() < 1e-12);
            }
        }

        #[test]
        fn coherent_score_argsort_invariant(
            pairs in proptest::collection::vec((-1.0f64..1.0, 0.0f64..1.0), 5..30),
            k in 2usize..5,
        ) {
            let (sim, rel_seed): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            // strictly increasing transform of similarities preserves CS@K
            let transformed: Vec<f64> = sim.iter().map(|v| (3.0 * v).tanh() + 5.0).collect();
            let a = coherent_score(&sim, &rel_seed, k);
            let b = coherent_score(&transformed, &rel_seed, k);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-9),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "disagreement: {a:?} vs {b:?}"),
            }
        }

        #[test]
        fn recall_non_decreasing_in_k(
            ranks in proptest::collection::vec(1usize..100, 1..50),
        ) {
            let mut prev = 0.0;
            for k in 1..100 {
                let r = recall_at_k(&ranks, k);
                prop_assert!(r >= prev);
                prop_assert!(r <= 100.0);
                prev = r;
            }
        }
    }
}
