//! Domain types shared by every other module.
//!
//! Features are stored as `f64` in memory. The on-disk payload is `f32`, so any
//! record that went through [`crate::io`] holds values exactly representable in
//! single precision.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One image: a global vector plus `k` stripe vectors ordered top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: u32,
    pub cam: u32,
    pub global_feat: Array1<f64>,
    /// `k x d_local`, row `i` is stripe `i`.
    pub stripe_feats: Array2<f64>,
}

impl EmbeddingRecord {
    pub fn new(id: u32, cam: u32, global_feat: Array1<f64>, stripe_feats: Array2<f64>) -> Self {
        Self {
            id,
            cam,
            global_feat,
            stripe_feats,
        }
    }

    pub fn k(&self) -> usize {
        self.stripe_feats.nrows()
    }

    pub fn stripes(&self) -> ArrayView2<'_, f64> {
        self.stripe_feats.view()
    }
}

/// Checks every record against `(k, d_local, d_global)` and for finiteness.
pub fn validate_records(
    records: &[EmbeddingRecord],
    k: usize,
    d_local: usize,
    d_global: usize,
) -> Result<()> {
    for (r, rec) in records.iter().enumerate() {
        let (rows, cols) = rec.stripe_feats.dim();
        if rows != k {
            return Err(Error::DimensionMismatch {
                record: r,
                detail: format!("{rows} stripe rows, expected {k}"),
            });
        }
        if cols != d_local {
            return Err(Error::DimensionMismatch {
                record: r,
                detail: format!("stripe width {cols}, expected {d_local}"),
            });
        }
        if rec.global_feat.len() != d_global {
            return Err(Error::DimensionMismatch {
                record: r,
                detail: format!(
                    "global length {}, expected {d_global}",
                    rec.global_feat.len()
                ),
            });
        }
        for ((s, c), v) in rec.stripe_feats.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    record: r,
                    stripe: Some(s),
                    coord: c,
                });
            }
        }
        if let Some(c) = rec.global_feat.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                record: r,
                stripe: None,
                coord: c,
            });
        }
    }
    Ok(())
}

/// Immutable, validated collection of records sharing one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    records: Vec<EmbeddingRecord>,
    k: usize,
    d_local: usize,
    d_global: usize,
}

impl EmbeddingSet {
    pub fn new(
        records: Vec<EmbeddingRecord>,
        k: usize,
        d_local: usize,
        d_global: usize,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("stripe count k must be >= 1".into()));
        }
        validate_records(&records, k, d_local, d_global)?;
        Ok(Self {
            records,
            k,
            d_local,
            d_global,
        })
    }

    /// Re-runs the invariant checks. Always `Ok` for a set built through
    /// [`EmbeddingSet::new`].
    pub fn validate(&self) -> Result<()> {
        validate_records(&self.records, self.k, self.d_local, self.d_global)
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn get(&self, index: usize) -> Option<&EmbeddingRecord> {
        self.records.get(index)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d_local(&self) -> usize {
        self.d_local
    }

    pub fn d_global(&self) -> usize {
        self.d_global
    }

    pub fn ids(&self) -> Vec<u32> {
        self.records.iter().map(|r| r.id).collect()
    }

    pub fn cams(&self) -> Vec<u32> {
        self.records.iter().map(|r| r.cam).collect()
    }

    pub fn labels(&self) -> Labels {
        Labels {
            ids: self.ids(),
            cams: self.cams(),
        }
    }

    /// Errors unless `other` has the same `(k, d_local, d_global)`.
    pub fn check_conforms(&self, other: &EmbeddingSet) -> Result<()> {
        let a = (self.k, self.d_local, self.d_global);
        let b = (other.k, other.d_local, other.d_global);
        if a != b {
            return Err(Error::Conformance(format!(
                "(k, d_local, d_global) = {a:?} vs {b:?}"
            )));
        }
        Ok(())
    }

    pub fn into_records(self) -> Vec<EmbeddingRecord> {
        self.records
    }
}

/// Identity and camera labels of a query or gallery list.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Labels {
    pub ids: Vec<u32>,
    pub cams: Vec<u32>,
}

impl Labels {
    pub fn new(ids: Vec<u32>, cams: Vec<u32>) -> Result<Self> {
        if ids.len() != cams.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} ids vs {} cams",
                ids.len(),
                cams.len()
            )));
        }
        Ok(Self { ids, cams })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Parameters of the sliding-window local alignment and of the combined metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub k: usize,
    /// Window parameter `W`; stripe `i` may match stripes within `i +/- floor(W/2)`.
    pub window: usize,
    /// Sliding step. Kept for completeness; the window formula enumerates every
    /// stripe, so nothing reads it.
    pub step: usize,
    pub local_weight: f64,
    pub global_weight: f64,
}

impl AlignmentConfig {
    /// Defaults for `k` stripes: `W = k/2` (at least 1), unit weights.
    pub fn new(k: usize) -> Self {
        Self {
            k,
            window: (k / 2).max(1),
            step: 1,
            local_weight: 1.0,
            global_weight: 1.0,
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    pub fn with_weights(mut self, global_weight: f64, local_weight: f64) -> Self {
        self.global_weight = global_weight;
        self.local_weight = local_weight;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidConfig("window must be >= 1".into()));
        }
        if !(self.local_weight >= 0.0 && self.global_weight >= 0.0)
            || !self.local_weight.is_finite()
            || !self.global_weight.is_finite()
        {
            return Err(Error::InvalidConfig(
                "distance weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self::new(8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricTag {
    Global,
    Lsa,
    Hard,
    Combined,
    Reranked,
}

impl MetricTag {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricTag::Global => "global",
            MetricTag::Lsa => "lsa",
            MetricTag::Hard => "hard",
            MetricTag::Combined => "combined",
            MetricTag::Reranked => "reranked",
        }
    }
}

impl fmt::Display for MetricTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(MetricTag::Global),
            "lsa" => Ok(MetricTag::Lsa),
            "hard" => Ok(MetricTag::Hard),
            "combined" => Ok(MetricTag::Combined),
            "reranked" => Ok(MetricTag::Reranked),
            other => Err(Error::InvalidConfig(format!("unknown metric {other:?}"))),
        }
    }
}

/// Dense `n_query x n_gallery` table of non-negative finite distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f64>,
    metric: MetricTag,
}

impl DistanceMatrix {
    pub fn new(values: Array2<f64>, metric: MetricTag) -> Result<Self> {
        if let Some(((q, g), v)) = values
            .indexed_iter()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidConfig(format!(
                "distance entry ({q}, {g}) = {v} is not a finite non-negative value"
            )));
        }
        Ok(Self { values, metric })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn metric(&self) -> MetricTag {
        self.metric
    }

    pub fn n_query(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_gallery(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// Ranked retrieval outcome over the valid queries.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    /// Gallery indices per query, ascending distance, junk entries removed.
    pub per_query_order: Vec<Vec<usize>>,
    /// `cmc[r]` is the fraction of valid queries matched within the top `r + 1`.
    pub cmc: Vec<f64>,
    pub map: f64,
    /// Queries that had at least one valid correct match.
    pub n_valid: usize,
}

impl RankingResult {
    /// CMC at 1-based `rank`, clamped to the last entry.
    pub fn rank(&self, rank: usize) -> f64 {
        if self.cmc.is_empty() || rank == 0 {
            return 0.0;
        }
        self.cmc[(rank - 1).min(self.cmc.len() - 1)]
    }

    pub fn rank1(&self) -> f64 {
        self.rank(1)
    }
}
