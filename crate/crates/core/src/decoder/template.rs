use crate::error::Result;
use crate::geometry::{fit_control_points, ControlPoints, RigidTransform, TriMesh, Vec3};
use crate::pointcloud::{farthest_point_sampling, PointLabel, SeedRule};
use crate::scenegen::{rasterize, CameraModel, RenderItem};

/// Depth slack when testing model points against the model's own z-buffer.
const VISIBILITY_TOLERANCE: f64 = 0.002;

/// Points seen at a grazing angle (normal-to-ray cosine below this) are
/// dropped: the sensor samples such surfaces too sparsely to match them.
pub const GRAZING_MIN_COS: f64 = 0.1;

/// Upper bound on ICP model points.
pub const MAX_ICP_POINTS: usize = 2048;

/// Per-class model data used by the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTemplate {
    pub class_id: u32,
    pub control_points: ControlPoints,
    /// Model-frame ICP points and their unit normals.
    pub icp_points: Vec<Vec3>,
    pub icp_normals: Vec<Vec3>,
    pub diameter: f64,
    pub mesh: TriMesh,
}

impl ModelTemplate {
    /// Control points from the mesh box and centroid; ICP points are mesh
    /// vertices thinned to at most `max_points` by farthest point sampling.
    pub fn from_mesh(class_id: u32, mesh: &TriMesh, max_points: usize) -> Result<Self> {
        let control_points = fit_control_points(mesh)?;
        let vertices = mesh.vertices();
        let normals = mesh.vertex_normals();
        let keep = if vertices.len() > max_points {
            farthest_point_sampling(vertices, max_points.max(1), SeedRule::LowestIndex)?
        } else {
            (0..vertices.len()).collect()
        };
        Ok(Self {
            class_id,
            control_points,
            icp_points: keep.iter().map(|&i| vertices[i]).collect(),
            icp_normals: keep.iter().map(|&i| normals[i]).collect(),
            diameter: mesh.diameter(),
            mesh: mesh.clone(),
        })
    }

    /// Model-frame ICP points expected to be seen by a sensor at the origin
    /// of the scene frame when the model sits at `pose`: points whose normal
    /// faces the sensor (not at a grazing angle) and, given a camera, that
    /// are not hidden behind the model itself.
    pub fn visible_points(&self, pose: &RigidTransform, camera: Option<&CameraModel>) -> Vec<Vec3> {
        let facing = self.icp_points.iter().zip(&self.icp_normals).filter(|(p, n)| {
            let q = pose.apply(p);
            pose.apply_vector(n).dot(&q) < -GRAZING_MIN_COS * q.norm()
        });
        let Some(cam) = camera else {
            return facing.map(|(p, _)| *p).collect();
        };
        let item = RenderItem {
            mesh: self.mesh.transformed(pose),
            color: [0.0; 3],
            label: PointLabel::BACKGROUND,
        };
        let Ok(image) = rasterize(&[item], &RigidTransform::identity(), cam) else {
            return Vec::new();
        };
        facing
            .filter(|(p, _)| {
                let q = pose.apply(p);
                if q.z <= 0.0 {
                    return false;
                }
                let (u, v) = cam.project(&q);
                let (u, v) = (u.round(), v.round());
                if u < 0.0 || v < 0.0 || u >= cam.width as f64 || v >= cam.height as f64 {
                    return false;
                }
                match image.pixels[v as usize * cam.width + u as usize] {
                    Some(hit) => q.z <= hit.point.z + VISIBILITY_TOLERANCE,
                    None => false,
                }
            })
            .map(|(p, _)| *p)
            .collect()
    }
}
