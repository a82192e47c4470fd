//! k-reciprocal re-ranking.
//!
//! Query and gallery are pooled into one neighbourhood graph. Each item is
//! encoded as a sparse weight vector over its (expanded) k-reciprocal
//! neighbours, optionally averaged over its `k2` nearest neighbours, and the
//! Jaccard distance between encodings is blended with the input distances.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::rank::argsort;
use crate::error::{Error, Result};
use crate::model::{DistanceMatrix, MetricTag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankParams {
    pub k1: usize,
    pub k2: usize,
    /// Weight of the original distance in the blend.
    pub lambda: f64,
}

impl Default for RerankParams {
    fn default() -> Self {
        Self {
            k1: 20,
            k2: 6,
            lambda: 0.3,
        }
    }
}

/// Items `j` among the first `k + 1` neighbours of `i` that also have `i`
/// among their own first `k + 1`. Keeps the order of `i`'s ranking.
pub(crate) fn k_reciprocal(rank: &[Vec<usize>], i: usize, k: usize) -> Vec<usize> {
    let n = rank[i].len();
    let forward = &rank[i][..(k + 1).min(n)];
    forward
        .iter()
        .copied()
        .filter(|&j| rank[j][..(k + 1).min(n)].contains(&i))
        .collect()
}

/// Ties go to the even neighbour, so `k1 = 5` expands with `k = 2`.
fn half_k(k1: usize) -> usize {
    (k1 as f64 / 2.0).round_ties_even() as usize
}

/// Reciprocal set of `i` grown by the reciprocal sets of its members whenever
/// more than two thirds of a member's set already lies inside. Sorted, unique.
pub(crate) fn expanded_neighbours(rank: &[Vec<usize>], i: usize, k1: usize) -> Vec<usize> {
    let base = k_reciprocal(rank, i, k1);
    let mut out = base.clone();
    let hk = half_k(k1);
    for &c in &base {
        let cand = k_reciprocal(rank, c, hk);
        let overlap = cand.iter().filter(|x| base.contains(x)).count();
        if overlap as f64 > 2.0 / 3.0 * cand.len() as f64 {
            out.extend_from_slice(&cand);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn check_square(m: &DistanceMatrix, n: usize, name: &str) -> Result<()> {
    if m.n_query() != n || m.n_gallery() != n {
        return Err(Error::ShapeMismatch(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.n_query(),
            m.n_gallery()
        )));
    }
    Ok(())
}

pub fn rerank(
    dist_qg: &DistanceMatrix,
    dist_qq: &DistanceMatrix,
    dist_gg: &DistanceMatrix,
    params: &RerankParams,
) -> Result<DistanceMatrix> {
    let (nq, ng) = (dist_qg.n_query(), dist_qg.n_gallery());
    check_square(dist_qq, nq, "query-query matrix")?;
    check_square(dist_gg, ng, "gallery-gallery matrix")?;
    let RerankParams { k1, k2, lambda } = *params;
    if !(k2 >= 1 && k1 > k2) {
        return Err(Error::InvalidConfig(format!(
            "need k1 > k2 >= 1, got k1={k1} k2={k2}"
        )));
    }
    if k1 >= ng {
        return Err(Error::InvalidConfig(format!(
            "k1={k1} must be smaller than the gallery size {ng}"
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidConfig(format!(
            "lambda {lambda} not in [0, 1]"
        )));
    }

    let n = nq + ng;
    let (qg, qq, gg) = (dist_qg.values(), dist_qq.values(), dist_gg.values());
    let full = Array2::from_shape_fn((n, n), |(i, j)| match (i < nq, j < nq) {
        (true, true) => qq[[i, j]],
        (true, false) => qg[[i, j - nq]],
        (false, true) => qg[[j, i - nq]],
        (false, false) => gg[[i - nq, j - nq]],
    });
    // Squared, each column scaled by its maximum, then transposed.
    let sq = full.mapv(|d| d * d);
    let col_max: Vec<f64> = sq
        .columns()
        .into_iter()
        .map(|c| c.iter().cloned().fold(0.0, f64::max))
        .collect();
    let scaled = Array2::from_shape_fn((n, n), |(i, j)| {
        let m = col_max[i];
        if m > 0.0 {
            sq[[j, i]] / m
        } else {
            sq[[j, i]]
        }
    });

    let rank: Vec<Vec<usize>> = scaled.rows().into_iter().map(argsort).collect();

    let mut v = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let idx = expanded_neighbours(&rank, i, k1);
        let weights: Vec<f64> = idx.iter().map(|&j| (-scaled[[i, j]]).exp()).collect();
        let total: f64 = weights.iter().sum();
        for (&j, w) in idx.iter().zip(weights) {
            v[[i, j]] = w / total;
        }
    }

    if k2 != 1 {
        let mut expanded = Array2::<f64>::zeros((n, n));
        for (i, neighbours) in rank.iter().enumerate() {
            let mut row = expanded.row_mut(i);
            for &j in &neighbours[..k2.min(n)] {
                row += &v.row(j);
            }
            row /= k2.min(n) as f64;
        }
        v = expanded;
    }

    let mut out = Array2::<f64>::zeros((nq, ng));
    for q in 0..nq {
        let support: Vec<usize> = (0..n).filter(|&l| v[[q, l]] != 0.0).collect();
        for g in 0..ng {
            let j = nq + g;
            let shared: f64 = support.iter().map(|&l| v[[q, l]].min(v[[j, l]])).sum();
            let jaccard = (1.0 - shared / (2.0 - shared)).max(0.0);
            out[[q, g]] = jaccard * (1.0 - lambda) + qg[[q, g]] * lambda;
        }
    }
    DistanceMatrix::new(out, MetricTag::Reranked)
}
