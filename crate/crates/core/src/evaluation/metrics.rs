use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, TriMesh, Vec3};
use crate::pointcloud::{farthest_point_sampling, SeedRule, SpatialIndex};

/// Vertex budget for ADD-S on large models.
pub const MAX_ADDS_POINTS: usize = 4096;

fn check(vertices: &[Vec3]) -> Result<()> {
    if vertices.is_empty() {
        return Err(Error::invalid("pose metrics need at least one model vertex"));
    }
    Ok(())
}

/// Mean distance between corresponding model vertices under the two poses.
pub fn add_metric(vertices: &[Vec3], gt: &RigidTransform, est: &RigidTransform) -> Result<f64> {
    check(vertices)?;
    let sum: f64 = vertices.iter().map(|x| (gt.apply(x) - est.apply(x)).norm()).sum();
    Ok(sum / vertices.len() as f64)
}

/// Mean distance from each estimated-pose vertex to the nearest
/// ground-truth-pose vertex.
pub fn adds_metric(vertices: &[Vec3], gt: &RigidTransform, est: &RigidTransform) -> Result<f64> {
    check(vertices)?;
    let index = SpatialIndex::build(&vertices.iter().map(|x| gt.apply(x)).collect::<Vec<_>>());
    let sum: f64 = vertices
        .iter()
        .map(|x| index.nearest(&est.apply(x)).expect("non-empty index").dist2.sqrt())
        .sum();
    Ok(sum / vertices.len() as f64)
}

/// Strict `value < fraction · diameter`.
pub fn is_correct(value: f64, diameter: f64, threshold_fraction: f64) -> bool {
    value < threshold_fraction * diameter
}

/// Model data for scoring one class.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalModel {
    pub vertices: Vec<Vec3>,
    /// Thinned vertex set used for ADD-S.
    pub adds_vertices: Vec<Vec3>,
    pub diameter: f64,
    pub symmetric: bool,
}

impl EvalModel {
    pub fn from_mesh(mesh: &TriMesh, symmetric: bool) -> Result<Self> {
        let vertices = mesh.vertices().to_vec();
        check(&vertices)?;
        let adds_vertices = if vertices.len() > MAX_ADDS_POINTS {
            farthest_point_sampling(&vertices, MAX_ADDS_POINTS, SeedRule::LowestIndex)?
                .into_iter()
                .map(|i| vertices[i])
                .collect()
        } else {
            vertices.clone()
        };
        Ok(Self {
            vertices,
            adds_vertices,
            diameter: mesh.diameter(),
            symmetric,
        })
    }

    /// ADD-S for symmetric models, ADD otherwise.
    pub fn pose_error(&self, gt: &RigidTransform, est: &RigidTransform) -> f64 {
        if self.symmetric {
            adds_metric(&self.adds_vertices, gt, est).expect("non-empty model")
        } else {
            add_metric(&self.vertices, gt, est).expect("non-empty model")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_and_translated_poses() {
        let v = vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.1, 0.0, 0.05), Vec3::zeros()];
        let gt = RigidTransform::from_axis_angle(&Vec3::y(), 0.4, Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(add_metric(&v, &gt, &gt).unwrap(), 0.0);
        assert_eq!(adds_metric(&v, &gt, &gt).unwrap(), 0.0);
        let shifted = RigidTransform::from_translation(Vec3::new(0.01, 0.0, 0.0)).compose(&gt);
        assert!((add_metric(&v, &gt, &shifted).unwrap() - 0.01).abs() < 1e-15);
        assert!(add_metric(&[], &gt, &gt).is_err());
    }

    #[test]
    fn symmetric_square() {
        let v: Vec<Vec3> = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
            .iter()
            .map(|&(x, y)| Vec3::new(x, y, 0.0))
            .collect();
        let gt = RigidTransform::identity();
        let rot = RigidTransform::from_axis_angle(&Vec3::z(), std::f64::consts::FRAC_PI_2, Vec3::zeros());
        assert!(adds_metric(&v, &gt, &rot).unwrap() < 1e-15);
        assert!((add_metric(&v, &gt, &rot).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let v: Vec<Vec3> = (0..200)
            .map(|_| Vec3::from_fn(|_, _| rng.random_range(-0.1..0.1)))
            .collect();
        for _ in 0..20 {
            let gt = RigidTransform::random(&mut rng, 1.0);
            let est = RigidTransform::random(&mut rng, 1.0);
            let mut add = 0.0;
            let mut adds = 0.0;
            for x in &v {
                let e = est.rotation * x + est.translation;
                let g = gt.rotation * x + gt.translation;
                add += (g - e).norm();
                adds += v
                    .iter()
                    .map(|y| (e - (gt.rotation * y + gt.translation)).norm())
                    .fold(f64::INFINITY, f64::min);
            }
            assert!((add_metric(&v, &gt, &est).unwrap() - add / 200.0).abs() < 1e-12);
            assert!((adds_metric(&v, &gt, &est).unwrap() - adds / 200.0).abs() < 1e-12);
        }
    }

    #[test]
    fn correctness_is_strict() {
        assert!(is_correct(0.0, 0.2, 0.1));
        assert!(!is_correct(0.1 * 0.2, 0.2, 0.1));
        assert!(!is_correct(0.05, 0.2, 0.25));
        assert!(is_correct(0.019, 0.2, 0.1));
    }
}
