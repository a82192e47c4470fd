//! Local sliding alignment for stripe-partitioned re-identification embeddings.
//!
//! Each image is described by a global vector and `k` horizontal stripe
//! vectors. [`alignment::lsa_distance`] matches every stripe against a window
//! of stripes in the other image, which tolerates vertical misalignment from
//! loose bounding boxes. Around it sit the training objectives ([`losses`]),
//! P x K batch sampling ([`sampling`]), CMC/mAP evaluation with optional
//! k-reciprocal re-ranking ([`evaluation`]), a synthetic benchmark ([`synth`])
//! and a small binary format ([`io`]).

pub mod alignment;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod losses;
pub mod model;
pub mod sampling;
pub mod synth;

pub use alignment::{lsa_distance, pairwise_matrix, pairwise_matrix_with_threads};
pub use error::{Error, Result};
pub use model::{
    AlignmentConfig, DistanceMatrix, EmbeddingRecord, EmbeddingSet, Labels, MetricTag,
    RankingResult,
};
