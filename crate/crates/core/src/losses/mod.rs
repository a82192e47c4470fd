//! Training objectives over a P x K batch.
//!
//! `total = id + beta * (tri_g + tri_l) + lambda * (cen_g + cen_l)`, where the
//! `_g` terms run on the global branch (Euclidean distances) and the `_l` terms
//! on the local branch (alignment distances).

mod center;
pub mod gradcheck;
mod id;
mod triplet;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use center::{center_loss, center_update, CenterTable};
pub use id::id_loss;
pub use triplet::{triplethard_loss, LossBatchView, TripletOutput};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub margin: f64,
    /// `lambda`, weight of the summed center losses.
    pub center_weight: f64,
    /// `beta`, applied to each branch's triplet term.
    pub triplet_weight: f64,
    pub smoothing: f64,
    pub num_classes: usize,
    /// Center update rate `alpha`.
    pub center_lr: f64,
}

impl LossConfig {
    pub fn new(num_classes: usize) -> Self {
        Self {
            margin: 0.3,
            center_weight: 0.05,
            triplet_weight: 0.3,
            smoothing: 0.1,
            num_classes,
            center_lr: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.margin.is_nan() || self.margin < 0.0 {
            return Err(Error::InvalidConfig("margin must be >= 0".into()));
        }
        let non_negative = |w: f64| w >= 0.0;
        if !non_negative(self.center_weight) || !non_negative(self.triplet_weight) {
            return Err(Error::InvalidConfig("loss weights must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(Error::InvalidConfig("smoothing must be in [0, 1)".into()));
        }
        if !(self.center_lr > 0.0 && self.center_lr <= 1.0) {
            return Err(Error::InvalidConfig("center_lr must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Unweighted terms of the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub id: f64,
    pub tri_g: f64,
    pub tri_l: f64,
    pub cen_g: f64,
    pub cen_l: f64,
}

impl LossBreakdown {
    pub fn combine(&self, cfg: &LossConfig) -> f64 {
        self.id
            + cfg.triplet_weight * (self.tri_g + self.tri_l)
            + cfg.center_weight * (self.cen_g + self.cen_l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalLoss {
    pub total: f64,
    pub breakdown: LossBreakdown,
}

pub fn total_loss(
    global_batch: &LossBatchView,
    local_batch: &LossBatchView,
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
    centers_g: &CenterTable,
    centers_l: &CenterTable,
    cfg: &LossConfig,
) -> Result<TotalLoss> {
    cfg.validate()?;
    if logits.ncols() != cfg.num_classes {
        return Err(Error::ShapeMismatch(format!(
            "{} logit columns vs {} classes",
            logits.ncols(),
            cfg.num_classes
        )));
    }
    for (name, batch) in [("global", global_batch), ("local", local_batch)] {
        if batch.labels() != labels {
            return Err(Error::ShapeMismatch(format!(
                "{name} batch labels differ from the classification labels"
            )));
        }
    }
    let breakdown = LossBreakdown {
        id: id_loss(logits, labels, cfg.smoothing)?.value,
        tri_g: triplethard_loss(global_batch, cfg.margin)?.value,
        tri_l: triplethard_loss(local_batch, cfg.margin)?.value,
        cen_g: center_loss(global_batch.features().view(), labels, centers_g)?.value,
        cen_l: center_loss(local_batch.features().view(), labels, centers_l)?.value,
    };
    Ok(TotalLoss {
        total: breakdown.combine(cfg),
        breakdown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn separated() -> LossBatchView {
        // two tight identities far apart
        let f = array![[0.0, 0.0], [0.0, 0.1], [10.0, 0.0], [10.0, 0.1]];
        LossBatchView::euclidean(f, vec![0, 0, 1, 1]).unwrap()
    }

    #[test]
    fn perfect_batch_has_zero_total() {
        let g = separated();
        let l = g.clone();
        let logits = array![[800.0, 0.0], [800.0, 0.0], [0.0, 800.0], [0.0, 800.0]];
        let centers = CenterTable::from_centers(array![[0.0, 0.05], [10.0, 0.05]]).unwrap();
        let cfg = LossConfig {
            smoothing: 0.0,
            ..LossConfig::new(2)
        };
        let out = total_loss(
            &g,
            &l,
            logits.view(),
            &[0, 0, 1, 1],
            &centers,
            &centers,
            &cfg,
        )
        .unwrap();
        assert_eq!(out.breakdown.id, 0.0);
        assert_eq!(out.breakdown.tri_g, 0.0);
        // features are 0.05 off their centers
        assert!(out.breakdown.cen_g > 0.0);
        let exact = LossBatchView::euclidean(
            array![[0.0, 0.0], [0.0, 0.0], [10.0, 0.0], [10.0, 0.0]],
            vec![0, 0, 1, 1],
        )
        .unwrap();
        let c2 = CenterTable::from_centers(array![[0.0, 0.0], [10.0, 0.0]]).unwrap();
        let out = total_loss(&exact, &exact, logits.view(), &[0, 0, 1, 1], &c2, &c2, &cfg).unwrap();
        assert_eq!(out.total, 0.0);
    }

    #[test]
    fn zero_lambda_ignores_centers() {
        let g = separated();
        let logits = array![[1.0, 0.0], [0.2, 0.3], [0.0, 1.0], [0.5, 0.1]];
        let cfg = LossConfig {
            center_weight: 0.0,
            ..LossConfig::new(2)
        };
        let a = CenterTable::zeros(2, 2);
        let b = CenterTable::from_centers(array![[5.0, -3.0], [1.0, 9.0]]).unwrap();
        let ta = total_loss(&g, &g, logits.view(), &[0, 0, 1, 1], &a, &a, &cfg).unwrap();
        let tb = total_loss(&g, &g, logits.view(), &[0, 0, 1, 1], &b, &b, &cfg).unwrap();
        assert_eq!(ta.total, tb.total);
        assert_ne!(ta.breakdown.cen_g, tb.breakdown.cen_g);
    }

    #[test]
    fn label_disagreement_rejected() {
        let g = separated();
        let logits = Array2::zeros((4, 2));
        let c = CenterTable::zeros(2, 2);
        let cfg = LossConfig::new(2);
        assert!(total_loss(&g, &g, logits.view(), &[0, 1, 0, 1], &c, &c, &cfg).is_err());
        let wide = Array2::zeros((4, 3));
        assert!(total_loss(&g, &g, wide.view(), &[0, 0, 1, 1], &c, &c, &cfg).is_err());
    }

    #[test]
    fn defaults() {
        let cfg = LossConfig::new(10);
        assert_eq!(
            (
                cfg.margin,
                cfg.center_weight,
                cfg.triplet_weight,
                cfg.smoothing
            ),
            (0.3, 0.05, 0.3, 0.1)
        );
        cfg.validate().unwrap();
    }
}
