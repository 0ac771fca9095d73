//! Measurement protocols: per-class IoU over the camera field of view,
//! proposal recall at IoU thresholds, and the reduction of dense per-point
//! proposals to a short list.

mod metrics;
mod proposals;
mod report;

pub use metrics::{miou, recall_at_iou, recalled_counts, ConfusionMatrix, MiouResult, RecallAccumulator, RECALL_THRESHOLDS};
pub use proposals::{proposals_from_output, select_proposals, ProposalConfig, ProposalSet};
pub use report::{eval_cloud, evaluate, evaluate_model, EvalConfig, EvalReport, OraclePredictor, Predictor};
