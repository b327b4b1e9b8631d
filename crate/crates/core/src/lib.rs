//! Mixed-frequency video understanding at desk scale.
//!
//! A question about a video is answered in two rounds. The first round sees
//! sparse, low-frequency frames and names the relevant time span as
//! `"from SSS to EEE"`. The second round re-samples that span densely, mixes
//! the dense tokens with the sparse ones through a single cross-attention
//! ([`mma`]), and asks the language backend again with the span as a clue.
//!
//! Language and vision models sit behind traits; deterministic mock backends
//! make every stage testable without weights. The crate also carries the
//! evaluation metrics ([`metrics`]) and the benchmark construction algorithms
//! ([`corpus`]).

pub mod corpus;
pub mod encoding;
pub mod error;
pub mod grounding;
pub mod jsonl;
pub mod metrics;
pub mod mma;
pub mod numerics;
pub mod orchestrator;
pub mod sampling;
pub mod selftest;

pub use error::{Error, Result};
pub use numerics::Matrix;
pub use sampling::{Segment, VideoTimeline};
