use ndarray::{Array2, ArrayView2};

use super::LossOutput;
use crate::error::{Error, Result};

/// Mean label-smoothed cross-entropy over the rows of `logits`.
///
/// The target for a sample of class `y` puts `1 - eps + eps / C` on `y` and
/// `eps / C` on every other class. The gradient is with respect to the logits.
pub fn id_loss(
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
    smoothing: f64,
) -> Result<LossOutput> {
    let (n, classes) = logits.dim();
    if classes < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if !(0.0..1.0).contains(&smoothing) {
        return Err(Error::InvalidConfig(format!(
            "label smoothing {smoothing} not in [0, 1)"
        )));
    }
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} logit rows vs {} labels",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }

    let off = smoothing / classes as f64;
    let on = 1.0 - smoothing + off;
    let mut grad = Array2::zeros((n, classes));
    let mut total = 0.0;
    for (i, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&x| (x - max).exp()).sum();
        let lse = max + sum_exp.ln();
        for (c, &x) in row.iter().enumerate() {
            let log_p = x - lse;
            let q = if c == y { on } else { off };
            total -= q * log_p;
            grad[[i, c]] = (log_p.exp() - q) / n as f64;
        }
    }
    Ok(LossOutput {
        value: total / n as f64,
        grad,
    })
}
