//! Synthetic stripe embeddings with identity structure, vertical misalignment
//! and partial occlusion.
//!
//! Every identity gets a random prototype (`k x d`, standard normal). Each image
//! is the prototype plus Gaussian noise, optionally shifted down cyclically by
//! a few stripes (bounding-box drift) and optionally with a contiguous block of
//! stripes replaced by noise (occlusion). The global feature is the mean of the
//! stripe rows. All values are rounded to `f32` so a set survives a save/load
//! cycle unchanged.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EmbeddingRecord, EmbeddingSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_ids: usize,
    pub per_id: usize,
    pub k: usize,
    /// Stripe width; the global feature has the same width.
    pub d_local: usize,
    pub noise_sigma: f64,
    pub shift_prob: f64,
    pub max_shift: usize,
    pub occl_prob: f64,
    pub occl_frac_range: (f64, f64),
    /// Default range for [`CorruptionMode::Crop`] via [`SynthSpec::corrupt_queries`].
    pub crop_frac_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_ids: 20,
            per_id: 4,
            k: 8,
            d_local: 16,
            noise_sigma: 0.1,
            shift_prob: 0.5,
            max_shift: 2,
            occl_prob: 0.0,
            occl_frac_range: (0.1, 0.3),
            crop_frac_range: (0.2, 0.3),
            seed: 0,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!(
            "{name} = {p} is not in [0, 1]"
        )));
    }
    Ok(())
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(Error::InvalidConfig(format!(
            "{name} = [{lo}, {hi}] is not a sub-range of [0, 1]"
        )));
    }
    Ok(())
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_ids == 0 || self.k == 0 || self.d_local == 0 {
            return Err(Error::InvalidConfig(
                "n_ids, k and d_local must be positive".into(),
            ));
        }
        if self.per_id < 2 {
            return Err(Error::InvalidConfig(
                "per_id must be >= 2 (one query plus at least one gallery image)".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise_sigma must be >= 0".into()));
        }
        if self.max_shift >= self.k {
            return Err(Error::InvalidConfig(format!(
                "max_shift {} must be < k {}",
                self.max_shift, self.k
            )));
        }
        check_prob("shift_prob", self.shift_prob)?;
        check_prob("occl_prob", self.occl_prob)?;
        check_range("occl_frac_range", self.occl_frac_range)?;
        check_range("crop_frac_range", self.crop_frac_range)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Query,
    Gallery,
}

/// What the generator did to one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordTruth {
    pub id: u32,
    pub cam: u32,
    pub split: Split,
    /// Position inside its query or gallery set.
    pub index: usize,
    /// Cyclic downward shift in stripes; 0 when unshifted.
    pub shift: usize,
    /// `(first stripe, length)` of the occluded block, 0-based.
    pub occlusion: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBenchmark {
    pub query: EmbeddingSet,
    pub gallery: EmbeddingSet,
    pub truth: Vec<RecordTruth>,
}

#[inline]
fn to_f32(x: f64) -> f64 {
    x as f32 as f64
}

/// Number of stripes covered by fraction `frac` of `k`, rounded up. The small
/// tolerance keeps products such as `0.3 * 10` from rounding up a whole stripe.
pub fn stripes_for_fraction(frac: f64, k: usize) -> usize {
    let raw = frac * k as f64;
    let n = (raw - 1e-9).ceil().max(0.0) as usize;
    n.min(k)
}

fn sample_fraction(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sigma: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(rng);
        z * sigma
    })
}

fn stripe_mean(stripes: &Array2<f64>) -> Array1<f64> {
    stripes
        .mean_axis(Axis(0))
        .expect("at least one stripe")
        .mapv(to_f32)
}

/// Cyclic downward shift: row `i` moves to row `(i + s) % k`.
pub fn shift_down(stripes: &Array2<f64>, s: usize) -> Array2<f64> {
    let k = stripes.nrows();
    let mut out = stripes.clone();
    for i in 0..k {
        out.row_mut((i + s) % k).assign(&stripes.row(i));
    }
    out
}

/// Standard-normal record, rounded to `f32`.
pub fn random_record(
    rng: &mut ChaCha8Rng,
    id: u32,
    cam: u32,
    k: usize,
    d_local: usize,
    d_global: usize,
) -> EmbeddingRecord {
    let stripes = normal_matrix(rng, k, d_local, 1.0).mapv(to_f32);
    let global = Array1::from_shape_simple_fn(d_global, || {
        let z: f64 = StandardNormal.sample(rng);
        to_f32(z)
    });
    EmbeddingRecord::new(id, cam, global, stripes)
}

/// `n` standard-normal records; record `i` has id `i / 2` and camera `i % 2`.
pub fn random_set(seed: u64, n: usize, k: usize, d_local: usize, d_global: usize) -> EmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| {
            random_record(
                &mut rng,
                (i / 2) as u32,
                (i % 2) as u32,
                k,
                d_local,
                d_global,
            )
        })
        .collect();
    EmbeddingSet::new(records, k, d_local, d_global).expect("generated records conform")
}

/// Builds a query/gallery benchmark. The first image of every identity is its
/// query (camera 0); the others go to the gallery on cameras `1..per_id`.
pub fn generate(spec: &SynthSpec) -> Result<SynthBenchmark> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (k, d) = (spec.k, spec.d_local);
    let mut query = Vec::with_capacity(spec.n_ids);
    let mut gallery = Vec::with_capacity(spec.n_ids * (spec.per_id - 1));
    let mut truth = Vec::with_capacity(spec.n_ids * spec.per_id);

    for id in 0..spec.n_ids as u32 {
        let proto = normal_matrix(&mut rng, k, d, 1.0);
        for j in 0..spec.per_id {
            let mut stripes = &proto + &normal_matrix(&mut rng, k, d, spec.noise_sigma);

            let mut shift = 0;
            if spec.max_shift > 0 && rng.random_bool(spec.shift_prob) {
                shift = rng.random_range(1..=spec.max_shift);
                stripes = shift_down(&stripes, shift);
            }

            let mut occlusion = None;
            if rng.random_bool(spec.occl_prob) {
                let n = stripes_for_fraction(sample_fraction(&mut rng, spec.occl_frac_range), k);
                if n > 0 {
                    let start = rng.random_range(0..=k - n);
                    let block = normal_matrix(&mut rng, n, d, 1.0);
                    stripes
                        .slice_mut(ndarray::s![start..start + n, ..])
                        .assign(&block);
                    occlusion = Some((start, n));
                }
            }

            let stripes = stripes.mapv(to_f32);
            let global = stripe_mean(&stripes);
            let cam = j as u32;
            let (split, index) = if j == 0 {
                (Split::Query, query.len())
            } else {
                (Split::Gallery, gallery.len())
            };
            let rec = EmbeddingRecord::new(id, cam, global, stripes);
            match split {
                Split::Query => query.push(rec),
                Split::Gallery => gallery.push(rec),
            }
            truth.push(RecordTruth {
                id,
                cam,
                split,
                index,
                shift,
                occlusion,
            });
        }
    }

    Ok(SynthBenchmark {
        query: EmbeddingSet::new(query, k, d, d)?,
        gallery: EmbeddingSet::new(gallery, k, d, d)?,
        truth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionMode {
    /// A contiguous block of stripes replaced by noise.
    Erase,
    /// Bottom stripes dropped, the rest stretched back to `k` rows.
    Crop,
}

impl std::str::FromStr for CorruptionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erase" => Ok(CorruptionMode::Erase),
            "crop" => Ok(CorruptionMode::Crop),
            other => Err(Error::InvalidConfig(format!(
                "unknown corruption mode {other:?}"
            ))),
        }
    }
}

fn population_std(m: &Array2<f64>) -> f64 {
    let n = m.len() as f64;
    let mean = m.sum() / n;
    (m.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Applies partial-body corruption to every record. Labels are kept. When the
/// global width equals the stripe width the global feature is recomputed as the
/// stripe mean, otherwise it is left as is.
pub fn corrupt_partial(
    set: &EmbeddingSet,
    mode: CorruptionMode,
    frac_range: (f64, f64),
    seed: u64,
) -> Result<EmbeddingSet> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    check_range("frac_range", frac_range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = set.k();
    let recompute_global = set.d_global() == set.d_local();

    let records = set
        .records()
        .iter()
        .map(|rec| {
            let frac = sample_fraction(&mut rng, frac_range);
            let n = stripes_for_fraction(frac, k);
            if n == 0 {
                return rec.clone();
            }
            let stripes = match mode {
                CorruptionMode::Erase => {
                    let scale = population_std(&rec.stripe_feats);
                    let start = rng.random_range(0..=k - n);
                    let mut out = rec.stripe_feats.clone();
                    let noise = Normal::new(0.0, scale).expect("finite scale");
                    for mut row in out.rows_mut().into_iter().skip(start).take(n) {
                        row.mapv_inplace(|_| to_f32(noise.sample(&mut rng)));
                    }
                    out
                }
                CorruptionMode::Crop => {
                    let keep = (k - n).max(1);
                    let mut out = rec.stripe_feats.clone();
                    for i in 0..k {
                        out.row_mut(i).assign(&rec.stripe_feats.row(i * keep / k));
                    }
                    out
                }
            };
            let global = if recompute_global {
                stripe_mean(&stripes)
            } else {
                rec.global_feat.clone()
            };
            EmbeddingRecord::new(rec.id, rec.cam, global, stripes)
        })
        .collect();
    EmbeddingSet::new(records, k, set.d_local(), set.d_global())
}

impl SynthBenchmark {
    /// Replaces the queries with a corrupted copy, leaving the gallery intact.
    pub fn corrupt_queries(
        mut self,
        mode: CorruptionMode,
        frac_range: (f64, f64),
        seed: u64,
    ) -> Result<Self> {
        self.query = corrupt_partial(&self.query, mode, frac_range, seed)?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{hard_align_distance, lsa_distance};
    use crate::model::AlignmentConfig;

    fn same_id_pairs(b: &SynthBenchmark) -> Vec<(&EmbeddingRecord, &EmbeddingRecord)> {
        let mut all: Vec<&EmbeddingRecord> = b.query.records().iter().collect();
        all.extend(b.gallery.records());
        let mut out = vec![];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if all[i].id == all[j].id {
                    out.push((all[i], all[j]));
                }
            }
        }
        out
    }

    #[test]
    fn degenerate_spec_gives_identical_records() {
        let spec = SynthSpec {
            noise_sigma: 0.0,
            shift_prob: 0.0,
            occl_prob: 0.0,
            n_ids: 5,
            seed: 3,
            ..SynthSpec::default()
        };
        let b = generate(&spec).unwrap();
        let cfg = AlignmentConfig::new(8);
        for (x, y) in same_id_pairs(&b) {
            assert_eq!(x.stripe_feats, y.stripe_feats);
            assert_eq!(lsa_distance(x, y, &cfg).unwrap().lsa, 0.0);
            assert_eq!(hard_align_distance(x, y).unwrap(), 0.0);
        }
    }

    #[test]
    fn shifted_benchmark_favours_lsa() {
        let spec = SynthSpec {
            seed: 5,
            n_ids: 20,
            per_id: 4,
            k: 8,
            d_local: 16,
            max_shift: 2,
            shift_prob: 0.5,
            ..SynthSpec::default()
        };
        let b = generate(&spec).unwrap();
        let w4 = AlignmentConfig::new(8).with_window(4);
        let w1 = AlignmentConfig::new(8).with_window(1);
        let pairs = same_id_pairs(&b);
        let n = pairs.len() as f64;
        let lsa: f64 = pairs
            .iter()
            .map(|(x, y)| lsa_distance(x, y, &w4).unwrap().lsa)
            .sum::<f64>()
            / n;
        let hard_w1: f64 = pairs
            .iter()
            .map(|(x, y)| lsa_distance(x, y, &w1).unwrap().lsa)
            .sum::<f64>()
            / n;
        let hard: f64 = pairs
            .iter()
            .map(|(x, y)| hard_align_distance(x, y).unwrap())
            .sum::<f64>()
            / n;
        assert_eq!(hard_w1, hard);
        assert!(lsa < hard, "lsa {lsa} vs hard {hard}");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec {
            seed: 5,
            occl_prob: 0.4,
            ..SynthSpec::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SynthSpec {
            seed: 6,
            ..spec.clone()
        };
        assert_ne!(generate(&other).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn every_query_has_cross_camera_gallery_match() {
        let b = generate(&SynthSpec {
            seed: 1,
            ..SynthSpec::default()
        })
        .unwrap();
        assert_eq!(b.query.len(), 20);
        assert_eq!(b.gallery.len(), 60);
        for q in b.query.records() {
            assert!(b
                .gallery
                .records()
                .iter()
                .any(|g| g.id == q.id && g.cam != q.cam));
        }
        assert_eq!(b.truth.len(), 80);
    }

    #[test]
    fn truth_records_shifts_and_occlusions() {
        let spec = SynthSpec {
            seed: 2,
            noise_sigma: 0.0,
            shift_prob: 1.0,
            occl_prob: 0.0,
            ..SynthSpec::default()
        };
        let b = generate(&spec).unwrap();
        assert!(b.truth.iter().all(|t| (1..=2).contains(&t.shift)));

        let spec = SynthSpec {
            seed: 2,
            shift_prob: 0.0,
            occl_prob: 1.0,
            occl_frac_range: (0.25, 0.25),
            ..SynthSpec::default()
        };
        let b = generate(&spec).unwrap();
        assert!(b
            .truth
            .iter()
            .all(|t| matches!(t.occlusion, Some((s, 2)) if s <= 6)));
    }

    #[test]
    fn spec_validation() {
        let bad = [
            SynthSpec {
                shift_prob: 1.5,
                ..SynthSpec::default()
            },
            SynthSpec {
                max_shift: 8,
                ..SynthSpec::default()
            },
            SynthSpec {
                per_id: 1,
                ..SynthSpec::default()
            },
            SynthSpec {
                occl_frac_range: (0.5, 0.2),
                ..SynthSpec::default()
            },
        ];
        for s in bad {
            assert!(generate(&s).is_err(), "{s:?}");
        }
    }

    #[test]
    fn fraction_rounding() {
        assert_eq!(stripes_for_fraction(0.25, 8), 2);
        assert_eq!(stripes_for_fraction(0.1, 8), 1);
        assert_eq!(stripes_for_fraction(0.3, 8), 3);
        assert_eq!(stripes_for_fraction(0.3, 10), 3);
        assert_eq!(stripes_for_fraction(0.0, 8), 0);
        assert_eq!(stripes_for_fraction(1.0, 8), 8);
    }

    #[test]
    fn zero_corruption_is_identity() {
        let set = random_set(4, 6, 8, 4, 4);
        for mode in [CorruptionMode::Erase, CorruptionMode::Crop] {
            assert_eq!(corrupt_partial(&set, mode, (0.0, 0.0), 1).unwrap(), set);
        }
    }

    #[test]
    fn erase_replaces_two_contiguous_stripes() {
        let set = random_set(4, 10, 8, 6, 3);
        let out = corrupt_partial(&set, CorruptionMode::Erase, (0.25, 0.25), 9).unwrap();
        for (a, b) in set.records().iter().zip(out.records()) {
            let changed: Vec<usize> = (0..8)
                .filter(|&i| a.stripe_feats.row(i) != b.stripe_feats.row(i))
                .collect();
            assert_eq!(changed.len(), 2);
            assert_eq!(changed[1], changed[0] + 1);
            assert_eq!((a.id, a.cam), (b.id, b.cam));
            // d_global != d_local: global untouched
            assert_eq!(a.global_feat, b.global_feat);
        }
    }

    #[test]
    fn crop_stretches_remaining_stripes() {
        let set = random_set(4, 3, 8, 2, 2);
        let out = corrupt_partial(&set, CorruptionMode::Crop, (0.25, 0.25), 0).unwrap();
        let src = [0, 0, 1, 2, 3, 3, 4, 5];
        for (a, b) in set.records().iter().zip(out.records()) {
            for (i, &s) in src.iter().enumerate() {
                assert_eq!(b.stripe_feats.row(i), a.stripe_feats.row(s));
            }
            assert_eq!(b.global_feat, stripe_mean(&b.stripe_feats));
        }
    }

    #[test]
    fn corruption_rejects_empty_set_and_bad_range() {
        let empty = EmbeddingSet::new(vec![], 8, 4, 4).unwrap();
        assert!(matches!(
            corrupt_partial(&empty, CorruptionMode::Erase, (0.1, 0.3), 0),
            Err(Error::EmptySet)
        ));
        let set = random_set(1, 2, 8, 4, 4);
        assert!(corrupt_partial(&set, CorruptionMode::Erase, (0.1, 1.3), 0).is_err());
    }

    #[test]
    fn shift_down_is_cyclic() {
        let m = Array2::from_shape_fn((4, 1), |(i, _)| i as f64);
        let s = shift_down(&m, 1);
        assert_eq!(s.column(0).to_vec(), vec![3.0, 0.0, 1.0, 2.0]);
    }
}
