//! Adaptive-weighted hard-mining triplet loss.
//!
//! For anchor `a` the positive term is the softmax(+d)-weighted mean of the
//! distances to its positives, so far positives dominate; the negative term is
//! the softmax(-d)-weighted mean over negatives, so near negatives dominate.
//! `L_a = [m + pos_a - neg_a]_+`, averaged over anchors.

use ndarray::{Array2, ArrayView2};

use crate::alignment::{euclidean_matrix, pairwise_matrix};
use crate::error::{Error, Result};
use crate::model::{AlignmentConfig, EmbeddingSet, MetricTag};

/// A batch seen by the triplet and center losses: per-sample features, labels
/// and the branch's pairwise distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatchView {
    features: Array2<f64>,
    labels: Vec<usize>,
    distance: Array2<f64>,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl LossBatchView {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, distance: Array2<f64>) -> Result<Self> {
        let n = labels.len();
        if features.nrows() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows vs {n} labels",
                features.nrows()
            )));
        }
        if distance.dim() != (n, n) {
            return Err(Error::ShapeMismatch(format!(
                "distance matrix is {:?}, expected ({n}, {n})",
                distance.dim()
            )));
        }
        for i in 0..n {
            if distance[[i, i]] != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "distance diagonal entry {i} is {}",
                    distance[[i, i]]
                )));
            }
            for j in 0..i {
                let (a, b) = (distance[[i, j]], distance[[j, i]]);
                if !a.is_finite()
                    || !b.is_finite()
                    || (a - b).abs() > SYMMETRY_TOL * a.abs().max(1.0)
                {
                    return Err(Error::InvalidConfig(format!(
                        "distance matrix not symmetric/finite at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            features,
            labels,
            distance,
        })
    }

    /// Global-branch view: Euclidean distances between feature rows.
    pub fn euclidean(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        let distance = euclidean_matrix(features.view());
        Self::new(features, labels, distance)
    }

    /// View over an embedding set. `Global` uses the global features; the
    /// stripe metrics (`Lsa`, `Hard`) use the flattened stripe matrix as the
    /// feature row and the corresponding alignment distance.
    pub fn from_set(set: &EmbeddingSet, cfg: &AlignmentConfig, metric: MetricTag) -> Result<Self> {
        let n = set.len();
        let features = match metric {
            MetricTag::Global => {
                let d = set.d_global();
                let flat: Vec<f64> = set
                    .records()
                    .iter()
                    .flat_map(|r| r.global_feat.iter().copied())
                    .collect();
                Array2::from_shape_vec((n, d), flat).expect("conforming set")
            }
            MetricTag::Lsa | MetricTag::Hard => {
                let d = set.k() * set.d_local();
                let flat: Vec<f64> = set
                    .records()
                    .iter()
                    .flat_map(|r| r.stripe_feats.iter().copied())
                    .collect();
                Array2::from_shape_vec((n, d), flat).expect("conforming set")
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "no loss branch uses the {other} metric"
                )))
            }
        };
        let distance = pairwise_matrix(set, set, cfg, metric)?.into_values();
        let labels = set.ids().into_iter().map(|id| id as usize).collect();
        Self::new(features, labels, distance)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn distance(&self) -> &Array2<f64> {
        &self.distance
    }

    /// `P(a)`: same label, anchor excluded.
    pub fn positives(&self, anchor: usize) -> Vec<usize> {
        positives(&self.labels, anchor)
    }

    /// `N(a)`: different label.
    pub fn negatives(&self, anchor: usize) -> Vec<usize> {
        negatives(&self.labels, anchor)
    }
}

fn positives(labels: &[usize], anchor: usize) -> Vec<usize> {
    (0..labels.len())
        .filter(|&j| j != anchor && labels[j] == labels[anchor])
        .collect()
}

fn negatives(labels: &[usize], anchor: usize) -> Vec<usize> {
    (0..labels.len())
        .filter(|&j| labels[j] != labels[anchor])
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletOutput {
    pub value: f64,
    /// Derivative of `value` w.r.t. each entry `distance[a][j]`, treating every
    /// entry as an independent input. Anchor `a` only reads row `a`.
    pub grad: Array2<f64>,
    /// `m + pos_a - neg_a` before the hinge.
    pub pre_hinge: Vec<f64>,
    /// Weights aligned with `positives(a)` / `negatives(a)`.
    pub positive_weights: Vec<Vec<f64>>,
    pub negative_weights: Vec<Vec<f64>>,
}

/// Softmax of `sign * d` and the weighted sum. Returns `(weights, sum)`.
fn weighted(d: &[f64], sign: f64) -> (Vec<f64>, f64) {
    let max = d
        .iter()
        .map(|&x| sign * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = d.iter().map(|&x| (sign * x - max).exp()).collect();
    let z: f64 = e.iter().sum();
    let w: Vec<f64> = e.into_iter().map(|v| v / z).collect();
    let s = w.iter().zip(d).map(|(w, d)| w * d).sum();
    (w, s)
}

pub(crate) fn triplet_core(
    distance: ArrayView2<'_, f64>,
    labels: &[usize],
    margin: f64,
) -> Result<TripletOutput> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    if margin.is_nan() || margin < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "margin {margin} must be >= 0"
        )));
    }
    let mut grad = Array2::zeros((n, n));
    let mut total = 0.0;
    let mut pre_hinge = Vec::with_capacity(n);
    let mut positive_weights = Vec::with_capacity(n);
    let mut negative_weights = Vec::with_capacity(n);

    for a in 0..n {
        let pos = positives(labels, a);
        let neg = negatives(labels, a);
        if pos.is_empty() {
            return Err(Error::NoPositive { anchor: a });
        }
        if neg.is_empty() {
            return Err(Error::NoNegative { anchor: a });
        }
        let dp: Vec<f64> = pos.iter().map(|&j| distance[[a, j]]).collect();
        let dn: Vec<f64> = neg.iter().map(|&j| distance[[a, j]]).collect();
        let (wp, sp) = weighted(&dp, 1.0);
        let (wn, sn) = weighted(&dn, -1.0);
        let v = margin + sp - sn;
        if v > 0.0 {
            total += v;
            // d/dd_j sum_i w_i d_i = w_j (1 + s (d_j - S)) for softmax(s * d)
            for ((&j, &w), &d) in pos.iter().zip(&wp).zip(&dp) {
                grad[[a, j]] = w * (1.0 + d - sp) / n as f64;
            }
            for ((&j, &w), &d) in neg.iter().zip(&wn).zip(&dn) {
                grad[[a, j]] = -w * (1.0 - d + sn) / n as f64;
            }
        }
        pre_hinge.push(v);
        positive_weights.push(wp);
        negative_weights.push(wn);
    }
    Ok(TripletOutput {
        value: total / n as f64,
        grad,
        pre_hinge,
        positive_weights,
        negative_weights,
    })
}

pub fn triplethard_loss(batch: &LossBatchView, margin: f64) -> Result<TripletOutput> {
    triplet_core(batch.distance.view(), &batch.labels, margin)
}
