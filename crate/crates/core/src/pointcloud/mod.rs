//! Point clouds and the keypoint pre-processing stage: spatial indexing,
//! farthest point / random sampling, neighborhood grouping and normal
//! estimation.

mod cloud;
mod grouping;
mod index;
mod keypoints;
mod normals;
mod sampling;

pub use cloud::{Point, PointCloud, PointLabel, BACKGROUND_CLASS, NO_INSTANCE};
pub use grouping::{group_neighbors, GroupedSample, FEATURE_DIM};
pub use index::{Neighbor, SpatialIndex};
pub use keypoints::{sample_keypoints, KeypointConfig, SamplingMethod};
pub use normals::{estimate_normals, NormalEstimate, FALLBACK_NORMAL};
pub use sampling::{farthest_point_sampling, random_sampling, SeedRule};
