//! Minimal neural-network toolkit: row-major tensors, a parameter store, a
//! reverse-mode autodiff tape and the layer building blocks used by the
//! model.

mod graph;
mod layers;
mod params;
mod tensor;

pub use graph::{apply_stat_updates, Graph, NodeId, StatUpdate, BN_EPS, BN_MOMENTUM};
pub use layers::{BatchNorm, Dense, Mlp};
pub use params::{Grads, Param, ParamId, ParamStore};
pub use tensor::{gemm, log_sum_exp, softmax_in_place, Tensor};
