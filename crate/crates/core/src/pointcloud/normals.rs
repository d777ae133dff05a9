use nalgebra::{Matrix3, SymmetricEigen};

use super::{Point, PointCloud, SpatialIndex};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Normal assigned where the neighborhood has no spread.
pub const FALLBACK_NORMAL: Vec3 = Vec3::new(0.0, 0.0, 1.0);

#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub cloud: PointCloud,
    /// `true` where the fallback normal was used.
    pub fallback: Vec<bool>,
}

/// PCA normals from the `k` nearest neighbors (including the point itself),
/// oriented toward a sensor at the origin.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<NormalEstimate> {
    if k < 3 || k > cloud.len() {
        return Err(Error::invalid(format!(
            "normal estimation needs 3 ≤ k ≤ N, got k = {k}, N = {}",
            cloud.len()
        )));
    }
    let positions = cloud.positions();
    let index = SpatialIndex::build(&positions);
    let mut points: Vec<Point> = cloud.points().to_vec();
    let mut fallback = vec![false; points.len()];

    for (i, p) in positions.iter().enumerate() {
        let nbrs = index.k_nearest(p, k);
        // Offsets from the query point keep exact duplicates at exactly zero.
        let offsets: Vec<Vec3> = nbrs.iter().map(|n| positions[n.index] - p).collect();
        let mean = offsets.iter().fold(Vec3::zeros(), |a, o| a + o) / offsets.len() as f64;
        let mut cov = Matrix3::zeros();
        for o in &offsets {
            let d = o - mean;
            cov += d * d.transpose();
        }
        let normal = if cov.iter().all(|v| *v == 0.0) {
            fallback[i] = true;
            FALLBACK_NORMAL
        } else {
            let eig = SymmetricEigen::new(cov);
            let smallest = eig.eigenvalues.imin();
            let mut n: Vec3 = eig.eigenvectors.column(smallest).into_owned();
            n.normalize_mut();
            if n.dot(p) > 0.0 {
                n = -n;
            }
            n
        };
        points[i].normal = Some(normal);
    }

    let (_, labels) = cloud.clone().into_parts();
    let cloud = match labels {
        Some(l) => PointCloud::with_labels(points, l)?,
        None => PointCloud::new(points)?,
    };
    Ok(NormalEstimate { cloud, fallback })
}
