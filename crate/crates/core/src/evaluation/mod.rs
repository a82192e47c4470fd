//! Ranking metrics, re-ranking and parameter sweeps.

mod rank;
mod rerank;
mod sweep;

pub use rank::rank_queries;
pub use rerank::{rerank, RerankParams};
pub use sweep::{evaluate, pool_stripes, sweep, write_csv, SweepParam, SweepRow, CSV_HEADER};
