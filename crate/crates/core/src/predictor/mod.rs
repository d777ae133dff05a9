//! Per-keypoint prediction: a small group-feature network with class,
//! control-point offset and confidence heads, its multi-task loss and
//! gradients, training, checkpoints, and a ground-truth oracle.

mod checkpoint;
mod loss;
mod network;
mod oracle;
mod targets;
mod train;

pub use checkpoint::{Checkpoint, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use loss::{
    backward, multitask_loss, numeric_gradient, relative_error, sample_loss, smooth_l1, LossConfig, LossParts,
    LossWeights,
};
pub use network::{forward, EncoderParams, Layer, NetworkShape, Prediction, OFFSET_DIM, POSITION_DIM};
pub use oracle::oracle_predictor;
pub use targets::{build_targets, confidence_target, mean_offset_error, ConfidenceParams, KeypointTargets, Offsets};
pub use train::{loss_curve_csv, prepare_example, train, EpochRecord, Phase, TrainConfig, Trainer, TrainingExample};
