//! Pose recovery from per-keypoint predictions: confidence filtering, box
//! reconstruction, voxel class voting, non-maxima suppression, clustering,
//! control-point alignment and ICP refinement.

mod icp;
mod pipeline;
mod template;

pub use icp::{icp_refine, IcpConfig, IcpOutcome};
pub use pipeline::{
    assign_clusters, decode, decode_detailed, nms, reconstruct_hypotheses, solve_pose, voxel_key, voxel_vote,
    BoxHypothesis, DecodeConfig, DecodeReport, DecodeScene, PoseEstimate,
};
pub use template::{ModelTemplate, GRAZING_MIN_COS, MAX_ICP_POINTS};
