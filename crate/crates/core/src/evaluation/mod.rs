//! Pose accuracy metrics (ADD, ADD-S), diameter-relative correctness and
//! dataset scoring with precision, recall and F1.

mod metrics;
mod score;

pub use metrics::{add_metric, adds_metric, is_correct, EvalModel, MAX_ADDS_POINTS};
pub use score::{
    recall_sweep, score_dataset, ClassScore, EvalConfig, SceneEstimates, SceneTruth, Scoreboard, TruthInstance,
};
