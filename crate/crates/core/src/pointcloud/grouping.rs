use super::{PointCloud, SpatialIndex};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Attributes per group member: relative position, color, normal.
pub const FEATURE_DIM: usize = 9;

/// Fixed-size local neighborhoods around a set of keypoints.
///
/// `features` holds `K × G` rows of [`FEATURE_DIM`] values, keypoint-major.
/// Member positions are stored relative to their keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSample {
    pub keypoint_indices: Vec<usize>,
    pub keypoint_positions: Vec<Vec3>,
    pub group_size: usize,
    pub group_radius: f64,
    pub features: Vec<f64>,
}

impl GroupedSample {
    pub fn num_keypoints(&self) -> usize {
        self.keypoint_indices.len()
    }

    pub fn row(&self, keypoint: usize, member: usize) -> &[f64] {
        let start = (keypoint * self.group_size + member) * FEATURE_DIM;
        &self.features[start..start + FEATURE_DIM]
    }

    /// Rows belonging to one keypoint.
    pub fn group(&self, keypoint: usize) -> &[f64] {
        let stride = self.group_size * FEATURE_DIM;
        &self.features[keypoint * stride..(keypoint + 1) * stride]
    }

    /// Reorders keypoints (and their groups) by `order`.
    pub fn permuted(&self, order: &[usize]) -> GroupedSample {
        let mut features = Vec::with_capacity(self.features.len());
        for &k in order {
            features.extend_from_slice(self.group(k));
        }
        GroupedSample {
            keypoint_indices: order.iter().map(|&k| self.keypoint_indices[k]).collect(),
            keypoint_positions: order.iter().map(|&k| self.keypoint_positions[k]).collect(),
            group_size: self.group_size,
            group_radius: self.group_radius,
            features,
        }
    }
}

/// Gathers up to `group_size` nearest points within `radius` of each
/// keypoint. Sparse neighborhoods are padded by repeating the nearest member.
pub fn group_neighbors(
    cloud: &PointCloud,
    index: &SpatialIndex,
    keypoint_indices: &[usize],
    group_size: usize,
    radius: f64,
) -> Result<GroupedSample> {
    if group_size == 0 {
        return Err(Error::invalid("group size must be at least 1"));
    }
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("group radius must be positive, got {radius}")));
    }
    if index.len() != cloud.len() {
        return Err(Error::invalid("spatial index was built for a different cloud"));
    }
    if let Some(&bad) = keypoint_indices.iter().find(|&&i| i >= cloud.len()) {
        return Err(Error::invalid(format!(
            "keypoint index {bad} out of range for {} points",
            cloud.len()
        )));
    }

    let points = cloud.points();
    let mut features = Vec::with_capacity(keypoint_indices.len() * group_size * FEATURE_DIM);
    let mut keypoint_positions = Vec::with_capacity(keypoint_indices.len());
    for &kp in keypoint_indices {
        let center = points[kp].position;
        keypoint_positions.push(center);
        let mut members: Vec<usize> = index
            .within_radius(&center, radius)
            .into_iter()
            .take(group_size)
            .map(|n| n.index)
            .collect();
        let nearest = members.first().copied().unwrap_or(kp);
        members.resize(group_size, nearest);
        for m in members {
            let mut row = points[m].attributes();
            for a in 0..3 {
                row[a] -= center[a];
            }
            features.extend_from_slice(&row);
        }
    }
    Ok(GroupedSample {
        keypoint_indices: keypoint_indices.to_vec(),
        keypoint_positions,
        group_size,
        group_radius: radius,
        features,
    })
}
