//! Retrieval accuracy as a function of the stripe count or the window size.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::rank::rank_queries;
use crate::alignment::pairwise_matrix_with_threads;
use crate::error::{Error, Result};
use crate::model::{AlignmentConfig, EmbeddingRecord, EmbeddingSet, MetricTag, RankingResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    /// Stripe count; stripes are pooled down from the stored `k`.
    Stripes,
    Window,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stripes" | "k" => Ok(SweepParam::Stripes),
            "window" | "w" => Ok(SweepParam::Window),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep parameter {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub rank1: f64,
    pub rank5: f64,
    pub rank10: f64,
    pub map: f64,
}

impl SweepRow {
    pub fn from_result(value: usize, r: &RankingResult) -> Self {
        Self {
            value,
            rank1: r.rank(1),
            rank5: r.rank(5),
            rank10: r.rank(10),
            map: r.map,
        }
    }
}

/// Averages groups of `k / k_new` adjacent stripes. `k_new` must divide `k`.
pub fn pool_stripes(set: &EmbeddingSet, k_new: usize) -> Result<EmbeddingSet> {
    let k = set.k();
    if k_new == 0 || !k.is_multiple_of(k_new) {
        return Err(Error::InvalidConfig(format!(
            "cannot pool {k} stripes into {k_new}"
        )));
    }
    if k_new == k {
        return Ok(set.clone());
    }
    let group = k / k_new;
    let records = set
        .records()
        .iter()
        .map(|rec| {
            let mut pooled = Array2::zeros((k_new, set.d_local()));
            for (i, chunk) in rec
                .stripe_feats
                .axis_chunks_iter(Axis(0), group)
                .enumerate()
            {
                pooled
                    .row_mut(i)
                    .assign(&chunk.mean_axis(Axis(0)).expect("non-empty group"));
            }
            EmbeddingRecord::new(rec.id, rec.cam, rec.global_feat.clone(), pooled)
        })
        .collect();
    EmbeddingSet::new(records, k_new, set.d_local(), set.d_global())
}

/// Distance matrix under `cfg` and `metric`, then CMC and mAP.
pub fn evaluate(
    query: &EmbeddingSet,
    gallery: &EmbeddingSet,
    cfg: &AlignmentConfig,
    metric: MetricTag,
    threads: usize,
) -> Result<RankingResult> {
    let dist = pairwise_matrix_with_threads(query, gallery, cfg, metric, threads)?;
    rank_queries(&dist, &query.labels(), &gallery.labels())
}

/// One row per value. A stripe sweep pools both sets and uses `W = k/2`
/// (at least 1); a window sweep keeps `cfg.k`.
pub fn sweep(
    param: SweepParam,
    values: &[usize],
    query: &EmbeddingSet,
    gallery: &EmbeddingSet,
    cfg: &AlignmentConfig,
    metric: MetricTag,
    threads: usize,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("no sweep values given".into()));
    }
    query.check_conforms(gallery)?;
    values
        .iter()
        .map(|&v| {
            let result = match param {
                SweepParam::Stripes => {
                    let q = pool_stripes(query, v)?;
                    let g = pool_stripes(gallery, v)?;
                    let c = AlignmentConfig {
                        k: v,
                        window: (v / 2).max(1),
                        ..*cfg
                    };
                    evaluate(&q, &g, &c, metric, threads)?
                }
                SweepParam::Window => {
                    if v == 0 {
                        return Err(Error::InvalidConfig("window must be >= 1".into()));
                    }
                    evaluate(query, gallery, &cfg.with_window(v), metric, threads)?
                }
            };
            Ok(SweepRow::from_result(v, &result))
        })
        .collect()
}

pub const CSV_HEADER: &str = "value,rank1,rank5,rank10,map";

pub fn write_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.value, r.rank1, r.rank5, r.rank10, r.map
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
