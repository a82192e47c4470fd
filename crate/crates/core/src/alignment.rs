//! Local sliding alignment (LSA) between stripe-partitioned embeddings.
//!
//! Stripe `i` of one image is matched to the closest stripe of the other image
//! inside the window `[max(1, i - W/2), min(k, i + W/2)]` (integer division).
//! This is done in both directions and the smaller directed sum is the LSA
//! distance. With `W = 1` the window is the diagonal and LSA reduces to hard
//! alignment.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{AlignmentConfig, DistanceMatrix, EmbeddingRecord, EmbeddingSet, MetricTag};

/// Inclusive 1-based stripe range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowBounds {
    pub lo: usize,
    pub hi: usize,
}

impl WindowBounds {
    pub fn contains(&self, j: usize) -> bool {
        self.lo <= j && j <= self.hi
    }

    /// Same range as 0-based indices.
    fn zero_based(&self) -> std::ops::RangeInclusive<usize> {
        self.lo - 1..=self.hi - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Stripes of `a` searched in windows of `b`.
    AToB,
    BToA,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentBreakdown {
    pub per_stripe_ab: Vec<f64>,
    pub per_stripe_ba: Vec<f64>,
    pub chosen_direction: Direction,
    pub lsa: f64,
}

/// Window of candidate stripes for 1-based stripe `i`.
pub fn window_bounds(i: usize, k: usize, window: usize) -> Result<WindowBounds> {
    if i == 0 || i > k {
        return Err(Error::IndexOutOfRange { index: i, len: k });
    }
    if window == 0 {
        return Err(Error::InvalidConfig("window must be >= 1".into()));
    }
    let half = window / 2;
    Ok(WindowBounds {
        lo: i.saturating_sub(half).max(1),
        hi: (i + half).min(k),
    })
}

/// Euclidean distance between two stripe vectors.
pub fn stripe_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "vector lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(l2(a, b))
}

#[inline]
fn l2(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let t = x - y;
            t * t
        })
        .sum::<f64>()
        .sqrt()
}

fn check_stripes(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>, k: usize) -> Result<()> {
    if a.nrows() != k || b.nrows() != k {
        return Err(Error::ShapeMismatch(format!(
            "expected {k} stripes, got {} and {}",
            a.nrows(),
            b.nrows()
        )));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "stripe widths {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Distances between stripe `i` of `a` and stripe `j` of `b`, only for pairs
/// inside the band `|i - j| <= half`. Entries outside the band are left as +inf.
fn banded_table(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>, half: usize) -> Array2<f64> {
    let k = a.nrows();
    let mut table = Array2::from_elem((k, k), f64::INFINITY);
    for i in 0..k {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(k - 1);
        for j in lo..=hi {
            table[[i, j]] = l2(a.row(i), b.row(j));
        }
    }
    table
}

/// Per-stripe minima of a banded table; `transpose` reads the table column-wise
/// (the reverse direction). Starts from the diagonal and keeps the lowest `j`
/// on ties.
fn directed_minima(table: &Array2<f64>, half: usize, transpose: bool) -> Vec<f64> {
    let k = table.nrows();
    (0..k)
        .map(|i| {
            let at = |j: usize| {
                if transpose {
                    table[[j, i]]
                } else {
                    table[[i, j]]
                }
            };
            let mut best = at(i);
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(k - 1);
            for j in lo..=hi {
                let d = at(j);
                if d < best {
                    best = d;
                }
            }
            best
        })
        .collect()
}

/// For each stripe of `a`, the shortest distance to a stripe of `b` inside its
/// window.
pub fn directed_align(
    a_stripes: ArrayView2<'_, f64>,
    b_stripes: ArrayView2<'_, f64>,
    cfg: &AlignmentConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_stripes(&a_stripes, &b_stripes, cfg.k)?;
    let mut out = Vec::with_capacity(cfg.k);
    for i in 1..=cfg.k {
        let w = window_bounds(i, cfg.k, cfg.window)?;
        let ai = a_stripes.row(i - 1);
        let mut best = l2(ai, b_stripes.row(i - 1));
        for j in w.zero_based() {
            let d = l2(ai, b_stripes.row(j));
            if d < best {
                best = d;
            }
        }
        out.push(best);
    }
    Ok(out)
}

fn lsa_from_stripes(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    window: usize,
) -> AlignmentBreakdown {
    let half = window / 2;
    let table = banded_table(&a, &b, half);
    let per_stripe_ab = directed_minima(&table, half, false);
    let per_stripe_ba = directed_minima(&table, half, true);
    let sum_ab: f64 = per_stripe_ab.iter().sum();
    let sum_ba: f64 = per_stripe_ba.iter().sum();
    let (chosen_direction, lsa) = if sum_ba < sum_ab {
        (Direction::BToA, sum_ba)
    } else {
        (Direction::AToB, sum_ab)
    };
    AlignmentBreakdown {
        per_stripe_ab,
        per_stripe_ba,
        chosen_direction,
        lsa,
    }
}

/// Bidirectional LSA distance with its per-stripe breakdown.
pub fn lsa_distance(
    a: &EmbeddingRecord,
    b: &EmbeddingRecord,
    cfg: &AlignmentConfig,
) -> Result<AlignmentBreakdown> {
    cfg.validate()?;
    let (sa, sb) = (a.stripes(), b.stripes());
    check_stripes(&sa, &sb, cfg.k)?;
    Ok(lsa_from_stripes(sa, sb, cfg.window))
}

/// Sum of diagonal stripe distances.
pub fn hard_align_distance(a: &EmbeddingRecord, b: &EmbeddingRecord) -> Result<f64> {
    let (sa, sb) = (a.stripes(), b.stripes());
    check_stripes(&sa, &sb, sa.nrows())?;
    Ok(sa
        .rows()
        .into_iter()
        .zip(sb.rows())
        .map(|(x, y)| l2(x, y))
        .sum())
}

pub fn global_distance(a: &EmbeddingRecord, b: &EmbeddingRecord) -> Result<f64> {
    stripe_distance(a.global_feat.view(), b.global_feat.view())
}

/// `global_weight * global + local_weight * lsa`.
pub fn combined_distance(
    a: &EmbeddingRecord,
    b: &EmbeddingRecord,
    cfg: &AlignmentConfig,
) -> Result<f64> {
    let g = global_distance(a, b)?;
    let l = lsa_distance(a, b, cfg)?.lsa;
    Ok(cfg.global_weight * g + cfg.local_weight * l)
}

/// Distance between two records under `metric`.
pub fn pair_distance(
    a: &EmbeddingRecord,
    b: &EmbeddingRecord,
    cfg: &AlignmentConfig,
    metric: MetricTag,
) -> Result<f64> {
    match metric {
        MetricTag::Global => global_distance(a, b),
        MetricTag::Lsa => lsa_distance(a, b, cfg).map(|r| r.lsa),
        MetricTag::Hard => hard_align_distance(a, b),
        MetricTag::Combined => combined_distance(a, b, cfg),
        MetricTag::Reranked => Err(Error::InvalidConfig(
            "reranked distances come from evaluation::rerank, not from a record pair".into(),
        )),
    }
}

fn check_pairwise(
    queries: &EmbeddingSet,
    gallery: &EmbeddingSet,
    cfg: &AlignmentConfig,
    metric: MetricTag,
) -> Result<()> {
    cfg.validate()?;
    queries.check_conforms(gallery)?;
    if queries.k() != cfg.k {
        return Err(Error::Conformance(format!(
            "sets have k={} but the alignment config has k={}",
            queries.k(),
            cfg.k
        )));
    }
    if metric == MetricTag::Reranked {
        return Err(Error::InvalidConfig(
            "pairwise_matrix cannot produce reranked distances".into(),
        ));
    }
    Ok(())
}

fn row(
    q: &EmbeddingRecord,
    gallery: &EmbeddingSet,
    cfg: &AlignmentConfig,
    metric: MetricTag,
) -> Vec<f64> {
    gallery
        .records()
        .iter()
        .map(|g| pair_distance(q, g, cfg, metric).expect("shapes checked up front"))
        .collect()
}

fn assemble(rows: Vec<Vec<f64>>, n_gallery: usize, metric: MetricTag) -> Result<DistanceMatrix> {
    let n_query = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((n_query, n_gallery), flat)
        .expect("every row has n_gallery entries");
    DistanceMatrix::new(values, metric)
}

/// Query x gallery matrix, rows computed in parallel on the current rayon pool.
pub fn pairwise_matrix(
    queries: &EmbeddingSet,
    gallery: &EmbeddingSet,
    cfg: &AlignmentConfig,
    metric: MetricTag,
) -> Result<DistanceMatrix> {
    check_pairwise(queries, gallery, cfg, metric)?;
    let rows: Vec<Vec<f64>> = queries
        .records()
        .par_iter()
        .map(|q| row(q, gallery, cfg, metric))
        .collect();
    assemble(rows, gallery.len(), metric)
}

/// As [`pairwise_matrix`] with an explicit degree of parallelism. `threads == 1`
/// runs on the calling thread. Output does not depend on `threads`.
pub fn pairwise_matrix_with_threads(
    queries: &EmbeddingSet,
    gallery: &EmbeddingSet,
    cfg: &AlignmentConfig,
    metric: MetricTag,
    threads: usize,
) -> Result<DistanceMatrix> {
    if threads <= 1 {
        check_pairwise(queries, gallery, cfg, metric)?;
        let rows = queries
            .records()
            .iter()
            .map(|q| row(q, gallery, cfg, metric))
            .collect();
        return assemble(rows, gallery.len(), metric);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| pairwise_matrix(queries, gallery, cfg, metric))
}

/// All-pairs Euclidean distances between the rows of `features`.
pub fn euclidean_matrix(features: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = features.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let d = l2(features.row(i), features.row(j));
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}
