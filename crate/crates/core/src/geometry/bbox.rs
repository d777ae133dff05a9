use super::{RigidTransform, Vec3};

/// Number of control points: eight box corners followed by the centroid.
pub const CONTROL_POINT_COUNT: usize = 9;

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    /// Componentwise min/max of `points`; `None` when empty.
    pub fn from_points<'a, I>(points: I) -> Option<Aabb>
    where
        I: IntoIterator<Item = &'a Vec3>,
    {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        Some(Aabb { min, max })
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extents(&self) -> Vec3 {
        self.max - self.min
    }

    /// Corner `b` takes `max` on axis `i` when bit `i` of `b` is set.
    pub fn corner(&self, b: usize) -> Vec3 {
        Vec3::new(
            if b & 1 != 0 { self.max.x } else { self.min.x },
            if b & 2 != 0 { self.max.y } else { self.min.y },
            if b & 4 != 0 { self.max.z } else { self.min.z },
        )
    }

    pub fn corners(&self) -> [Vec3; 8] {
        std::array::from_fn(|b| self.corner(b))
    }

    /// Closed-interval intersection test; touching boxes overlap.
    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    /// Axis-aligned bounds of this box after a rigid motion.
    pub fn transformed(&self, t: &RigidTransform) -> Aabb {
        let corners = self.corners().map(|c| t.apply(&c));
        Aabb::from_points(corners.iter()).expect("eight corners")
    }
}

/// The nine-point box parameterization: eight corners of a model-frame
/// bounding box (see [`Aabb::corner`] for the ordering) plus the model
/// centroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPoints {
    pub corners: [Vec3; 8],
    pub centroid: Vec3,
}

impl ControlPoints {
    pub fn from_aabb(aabb: &Aabb, centroid: Vec3) -> Self {
        Self {
            corners: aabb.corners(),
            centroid,
        }
    }

    /// Corners in canonical order, centroid last.
    pub fn points(&self) -> [Vec3; CONTROL_POINT_COUNT] {
        std::array::from_fn(|k| if k < 8 { self.corners[k] } else { self.centroid })
    }

    pub fn from_points(points: &[Vec3; CONTROL_POINT_COUNT]) -> Self {
        Self {
            corners: std::array::from_fn(|k| points[k]),
            centroid: points[8],
        }
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            corners: self.corners.map(|c| t.apply(&c)),
            centroid: t.apply(&self.centroid),
        }
    }

    /// Corner index pairs forming the twelve box edges.
    pub fn edges() -> [(usize, usize); 12] {
        let mut out = [(0, 0); 12];
        let mut n = 0;
        for a in 0..8usize {
            for bit in [1usize, 2, 4] {
                if a & bit == 0 {
                    out[n] = (a, a | bit);
                    n += 1;
                }
            }
        }
        out
    }
}
