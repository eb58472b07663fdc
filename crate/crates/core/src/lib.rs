//! Long-tail knowledge-base completion.
//!
//! Stage 1 asks an extractive QA model a relation-specific question over each
//! sentence of the subject's article and pools the answer spans. Stage 2 asks
//! a generative entity-disambiguation model to name the entity mentioned in a
//! marked statement; a candidate survives only when its surface matches one
//! of the generated entities (labels and aliases included), which also fixes
//! its canonical KB identifier. The kept fact is scored by the mean of both
//! stages and cut at a threshold calibrated on a held-out split.
//!
//! Alongside the pipeline the crate builds MALT-style benchmarks (multi-token,
//! ambiguous, long-tail facts) from a KB snapshot and evaluates predictions
//! against them.

pub mod backend;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod jsonl;
pub mod malt;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod prompt;
pub mod rng;
pub mod synthetic;

pub use error::{BackendError, DataError};
pub use model::{normalize, strip_qualifier, EntityId, EntityRecord, GroundFact, NormalizedName, RelationSpec};
pub use par::Execution;
