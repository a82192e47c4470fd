//! P x K identity-balanced batches.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::EmbeddingSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSpec {
    /// Identities per batch.
    pub p: usize,
    /// Images per identity.
    pub k_per_id: usize,
    pub seed: u64,
}

impl BatchSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            p: 8,
            k_per_id: 4,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || self.k_per_id < 2 {
            return Err(Error::InvalidConfig(format!(
                "P={} and K={} must both be >= 2",
                self.p, self.k_per_id
            )));
        }
        Ok(())
    }
}

/// Record indices grouped by identity, in ascending id order.
fn by_identity(set: &EmbeddingSet) -> BTreeMap<u32, Vec<usize>> {
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, rec) in set.records().iter().enumerate() {
        groups.entry(rec.id).or_default().push(i);
    }
    groups
}

/// Draws `P` distinct identities and `K` images of each. Identities with fewer
/// than `K` images are sampled with replacement. The batch is laid out
/// identity by identity.
pub fn sample_batch(set: &EmbeddingSet, spec: &BatchSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let groups = by_identity(set);
    if groups.len() < spec.p {
        return Err(Error::NotEnoughIdentities {
            needed: spec.p,
            found: groups.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ids: Vec<u32> = groups.keys().copied().collect();
    let chosen: Vec<u32> = ids.choose_multiple(&mut rng, spec.p).copied().collect();

    let mut batch = Vec::with_capacity(spec.p * spec.k_per_id);
    for id in chosen {
        let members = &groups[&id];
        if members.len() >= spec.k_per_id {
            let mut pool = members.clone();
            pool.shuffle(&mut rng);
            batch.extend_from_slice(&pool[..spec.k_per_id]);
        } else {
            for _ in 0..spec.k_per_id {
                batch.push(*members.choose(&mut rng).expect("non-empty group"));
            }
        }
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EmbeddingRecord;
    use ndarray::{Array1, Array2};
    use std::collections::HashMap;

    fn balanced(ids: u32, per_id: usize) -> EmbeddingSet {
        let records = (0..ids)
            .flat_map(|id| {
                (0..per_id).map(move |c| {
                    EmbeddingRecord::new(id, c as u32, Array1::zeros(1), Array2::zeros((2, 1)))
                })
            })
            .collect();
        EmbeddingSet::new(records, 2, 1, 1).unwrap()
    }

    fn label_counts(set: &EmbeddingSet, batch: &[usize]) -> HashMap<u32, usize> {
        let mut m = HashMap::new();
        for &i in batch {
            *m.entry(set.records()[i].id).or_default() += 1;
        }
        m
    }

    #[test]
    fn exact_fit_is_a_permutation() {
        let set = balanced(8, 4);
        let mut batch = sample_batch(&set, &BatchSpec::new(3)).unwrap();
        batch.sort_unstable();
        assert_eq!(batch, (0..32).collect::<Vec<_>>());
    }

    #[test]
    fn too_few_identities() {
        let set = balanced(2, 4);
        assert!(matches!(
            sample_batch(&set, &BatchSpec::new(0)),
            Err(Error::NotEnoughIdentities {
                needed: 8,
                found: 2
            })
        ));
    }

    #[test]
    fn deterministic_per_seed() {
        let set = balanced(20, 6);
        let a = sample_batch(&set, &BatchSpec::new(17)).unwrap();
        let b = sample_batch(&set, &BatchSpec::new(17)).unwrap();
        assert_eq!(a, b);
        let c = sample_batch(&set, &BatchSpec::new(18)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn structure_holds_with_upsampling() {
        let mut records = balanced(10, 5).into_records();
        // identity 3 keeps a single image
        records.retain(|r| r.id != 3 || r.cam == 0);
        let set = EmbeddingSet::new(records, 2, 1, 1).unwrap();
        for seed in 0..200 {
            let spec = BatchSpec {
                p: 6,
                k_per_id: 4,
                seed,
            };
            let batch = sample_batch(&set, &spec).unwrap();
            assert_eq!(batch.len(), 24);
            let counts = label_counts(&set, &batch);
            assert_eq!(counts.len(), 6);
            assert!(counts.values().all(|&c| c == 4));
        }
    }

    #[test]
    fn invalid_spec() {
        let set = balanced(8, 4);
        let spec = BatchSpec {
            p: 1,
            k_per_id: 4,
            seed: 0,
        };
        assert!(sample_batch(&set, &spec).is_err());
    }

    #[test]
    fn identity_frequency_is_uniform() {
        // 16 ids, P = 8: each id appears with probability 1/2 per batch
        let set = balanced(16, 4);
        let trials = 1000;
        let mut freq = [0usize; 16];
        for seed in 0..trials {
            let batch = sample_batch(&set, &BatchSpec::new(seed)).unwrap();
            for id in label_counts(&set, &batch).keys() {
                freq[*id as usize] += 1;
            }
        }
        let p = 0.5;
        let mean = trials as f64 * p;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for (id, &f) in freq.iter().enumerate() {
            assert!(
                (f as f64 - mean).abs() <= 3.0 * sigma,
                "identity {id} drawn {f} times"
            );
        }
    }
}
