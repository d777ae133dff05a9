//! Rigid-body geometry: transforms, boxes, the nine control points,
//! triangle meshes and Kabsch alignment.
//!
//! All lengths are meters.

mod bbox;
mod kabsch;
mod mesh;
mod transform;

pub use bbox::{Aabb, ControlPoints, CONTROL_POINT_COUNT};
pub use kabsch::{alignment_residual, kabsch_align, COLLINEAR_RATIO};
pub use mesh::{fit_control_points, model_diameter, TriMesh};
pub use transform::{transform_points, RigidTransform, ROTATION_TOLERANCE};

pub type Vec3 = nalgebra::Vector3<f64>;
