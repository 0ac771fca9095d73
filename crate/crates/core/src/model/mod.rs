//! Shared hierarchical point-set encoder-decoder with a semantic head, a
//! detachable bin-based proposal head and semantic feature fusion.
//!
//! The encoder has four set-abstraction levels (farthest point sampling,
//! two-radius grouping, per-group three-layer stacks, max pooling) and four
//! feature-propagation levels (inverse-distance three-neighbor
//! interpolation plus skip features). Both heads are per-point maps over the
//! shared features. With fusion enabled the proposal head also sees a
//! learned low-dimensional summary of the semantic likelihoods, computed so
//! that no gradient flows back into the semantic head along that path.

mod checkpoint;
mod config;
mod network;
mod sampling;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, SaLevelConfig, INPUT_FEATURES};
pub use network::{DassModel, Forward, PreparedBatch, Prediction};
pub use sampling::{ball_query, ball_query_multi, farthest_point_sample, three_nn, INTERP_EPS};

#[cfg(test)]
mod tests;
