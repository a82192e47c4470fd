//! Central finite-difference checks of the analytic loss gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{center_loss, id_loss, triplet::triplet_core, CenterTable};
use crate::alignment::euclidean_matrix;

pub const FD_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-5;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every entry of `x`.
pub fn central_difference<F>(x: &Array2<f64>, step: f64, mut f: F) -> Array2<f64>
where
    F: FnMut(&Array2<f64>) -> f64,
{
    let mut probe = x.clone();
    let mut out = Array2::zeros(x.raw_dim());
    for (idx, g) in out.indexed_iter_mut() {
        let orig = probe[idx];
        probe[idx] = orig + step;
        let up = f(&probe);
        probe[idx] = orig - step;
        let down = f(&probe);
        probe[idx] = orig;
        *g = (up - down) / (2.0 * step);
    }
    out
}

/// `max |a - n| / max(max |a|, max |n|)`; zero when both gradients vanish.
pub fn relative_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric.iter())
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub loss: &'static str,
    pub seed: u64,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

/// 6 samples, 5 classes, smoothing 0.1.
pub fn check_id_loss(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = normal(&mut rng, 6, 5, 1.5);
    let labels: Vec<usize> = (0..6).map(|_| rng.random_range(0..5)).collect();
    let analytic = id_loss(logits.view(), &labels, 0.1)
        .expect("valid batch")
        .grad;
    let numeric = central_difference(&logits, FD_STEP, |x| {
        id_loss(x.view(), &labels, 0.1).expect("valid batch").value
    });
    GradCheckReport {
        loss: "id",
        seed,
        max_rel_error: relative_error(&analytic, &numeric),
    }
}

/// Two identities with four samples each; distances from random features.
pub fn triplet_batch(seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
    let mut features = normal(&mut rng, 8, 6, 0.6);
    for (mut row, &y) in features.rows_mut().into_iter().zip(&labels) {
        row[0] += y as f64;
    }
    (euclidean_matrix(features.view()), labels)
}

pub fn check_triplet_loss(seed: u64) -> GradCheckReport {
    let (distance, labels) = triplet_batch(seed);
    let margin = 0.3;
    let analytic = triplet_core(distance.view(), &labels, margin)
        .expect("valid batch")
        .grad;
    let numeric = central_difference(&distance, FD_STEP, |d| {
        triplet_core(d.view(), &labels, margin)
            .expect("valid batch")
            .value
    });
    GradCheckReport {
        loss: "triplethard",
        seed,
        max_rel_error: relative_error(&analytic, &numeric),
    }
}

/// 8 samples of width 5 over 3 classes.
pub fn check_center_loss(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = normal(&mut rng, 8, 5, 1.0);
    let labels: Vec<usize> = (0..8).map(|_| rng.random_range(0..3)).collect();
    let centers = CenterTable::from_centers(normal(&mut rng, 3, 5, 1.0)).expect("finite");
    let analytic = center_loss(features.view(), &labels, &centers)
        .expect("valid batch")
        .grad;
    let numeric = central_difference(&features, FD_STEP, |f| {
        center_loss(f.view(), &labels, &centers)
            .expect("valid batch")
            .value
    });
    GradCheckReport {
        loss: "center",
        seed,
        max_rel_error: relative_error(&analytic, &numeric),
    }
}

/// All three checks for seeds `base_seed .. base_seed + n_seeds`.
pub fn run_suite(base_seed: u64, n_seeds: u64) -> Vec<GradCheckReport> {
    (base_seed..base_seed + n_seeds)
        .flat_map(|s| {
            [
                check_id_loss(s),
                check_triplet_loss(s),
                check_center_loss(s),
            ]
        })
        .collect()
}
