use serde::{Deserialize, Serialize};

use super::{
    farthest_point_sampling, group_neighbors, random_sampling, GroupedSample, PointCloud, SeedRule, SpatialIndex,
};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMethod {
    #[default]
    Fps,
    Random,
}

/// Keypoint selection and grouping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeypointConfig {
    /// `K`; clamped to the cloud size.
    pub keypoints: usize,
    /// `G`.
    pub group_size: usize,
    /// Grouping radius, meters.
    pub radius: f64,
    pub method: SamplingMethod,
    pub seed_rule: SeedRule,
    /// Seed for random sampling.
    pub seed: u64,
}

impl Default for KeypointConfig {
    fn default() -> Self {
        Self {
            keypoints: 4096,
            group_size: 32,
            radius: 0.03,
            method: SamplingMethod::Fps,
            seed_rule: SeedRule::LowestIndex,
            seed: 0,
        }
    }
}

/// Selects keypoints from `cloud` and groups their neighborhoods.
///
/// An empty cloud yields an empty sample.
pub fn sample_keypoints(cloud: &PointCloud, cfg: &KeypointConfig) -> Result<GroupedSample> {
    let positions = cloud.positions();
    let k = cfg.keypoints.min(positions.len());
    let indices = if k == 0 {
        Vec::new()
    } else {
        match cfg.method {
            SamplingMethod::Fps => farthest_point_sampling(&positions, k, cfg.seed_rule)?,
            SamplingMethod::Random => random_sampling(&positions, k, cfg.seed)?,
        }
    };
    let index = SpatialIndex::build(&positions);
    group_neighbors(cloud, &index, &indices, cfg.group_size, cfg.radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn clamps_and_handles_empty_clouds() {
        let cfg = KeypointConfig {
            keypoints: 10,
            group_size: 4,
            ..KeypointConfig::default()
        };
        let empty = PointCloud::new(Vec::new()).unwrap();
        assert_eq!(sample_keypoints(&empty, &cfg).unwrap().num_keypoints(), 0);

        let pts: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64 * 0.01, 0.0, 1.0)).collect();
        let cloud = PointCloud::from_positions(&pts).unwrap();
        let s = sample_keypoints(&cloud, &cfg).unwrap();
        assert_eq!(s.num_keypoints(), 5);
        assert_eq!(s.features.len(), 5 * 4 * 9);
        let r = sample_keypoints(
            &cloud,
            &KeypointConfig {
                method: SamplingMethod::Random,
                ..cfg
            },
        )
        .unwrap();
        let mut idx = r.keypoint_indices.clone();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }
}
