//! Losses, optimizer and the joint training loop over two partially
//! annotated corpora.

mod losses;
mod optim;
mod step;
mod trainer;

pub use losses::{
    class_weights_from_frequency, det_loss, det_targets, seg_loss, smooth_l1, smooth_l1_grad, DetLossParts, DetTargets,
    SMOOTH_L1_BETA,
};
pub use optim::{AdamW, OneCycle};
pub use step::{
    check_linearity_of, compute_gradients, det_gradients, multitask_step, seg_gradients, DetBatch, LossWeights,
    SegBatch, StepMetrics,
};
pub use trainer::{derive_seed, train_loop, train_loop_until, EpochRecord, TrainConfig, Trainer};
