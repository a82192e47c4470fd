use ndarray::{Array2, ArrayView2};

use super::LossOutput;
use crate::error::{Error, Result};

/// One learned center per class plus how many samples have updated it.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterTable {
    centers: Array2<f64>,
    counts: Vec<u64>,
}

impl CenterTable {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            centers: Array2::zeros((num_classes, dim)),
            counts: vec![0; num_classes],
        }
    }

    pub fn from_centers(centers: Array2<f64>) -> Result<Self> {
        if let Some(((c, j), _)) = centers.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "center ({c}, {j}) is not finite"
            )));
        }
        let counts = vec![0; centers.nrows()];
        Ok(Self { centers, counts })
    }

    pub fn centers(&self) -> &Array2<f64> {
        &self.centers
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.centers.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    fn check(&self, features: &ArrayView2<'_, f64>, labels: &[usize]) -> Result<()> {
        if features.nrows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.ncols() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "feature width {} vs center width {}",
                features.ncols(),
                self.dim()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= self.num_classes()) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.num_classes(),
            });
        }
        Ok(())
    }
}

/// `1/2 * sum_i |f_i - c_{y_i}|^2`, gradient `f_i - c_{y_i}` per row.
pub fn center_loss(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    centers: &CenterTable,
) -> Result<LossOutput> {
    centers.check(&features, labels)?;
    let mut grad = Array2::zeros(features.raw_dim());
    let mut value = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let diff = &features.row(i) - &centers.centers.row(y);
        value += 0.5 * diff.dot(&diff);
        grad.row_mut(i).assign(&diff);
    }
    Ok(LossOutput { value, grad })
}

/// One center step: `c_j += alpha * sum_{y_i = j} (f_i - c_j) / (1 + n_j)`.
/// Classes absent from the batch keep their center.
pub fn center_update(
    centers: &CenterTable,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    alpha: f64,
) -> Result<CenterTable> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "center learning rate {alpha} not in (0, 1]"
        )));
    }
    centers.check(&features, labels)?;
    let mut next = centers.clone();
    let mut pull = Array2::<f64>::zeros(centers.centers.raw_dim());
    let mut hits = vec![0u64; centers.num_classes()];
    for (i, &y) in labels.iter().enumerate() {
        let diff = &features.row(i) - &centers.centers.row(y);
        let mut row = pull.row_mut(y);
        row += &diff;
        hits[y] += 1;
    }
    for (j, &n) in hits.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let step = pull.row(j).mapv(|v| alpha * v / (1.0 + n as f64));
        let mut c = next.centers.row_mut(j);
        c += &step;
        next.counts[j] += n;
    }
    Ok(next)
}
