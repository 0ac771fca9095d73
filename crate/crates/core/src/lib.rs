//! Detection-aware point cloud semantic segmentation.
//!
//! A shared point-set encoder is trained jointly from two partially annotated
//! corpora: one with per-point semantic labels and one with oriented car
//! boxes. A per-point semantic head and a detachable bin-based proposal head
//! sit on top of the shared features; semantic feature fusion feeds a compact
//! summary of the semantic likelihoods into the proposal head.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod geom;
pub mod model;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
pub use config::RunConfig;
pub use geom::{Box7, BoxCodecConfig};
pub use model::{DassModel, ModelConfig};
