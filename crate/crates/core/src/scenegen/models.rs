use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fit_control_points, ControlPoints, RigidTransform, TriMesh, Vec3};

/// A rigid object that can be placed into scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    pub name: String,
    pub class_id: u32,
    pub mesh: TriMesh,
    pub color: [f64; 3],
    pub symmetric: bool,
}

impl ObjectModel {
    pub fn new(name: impl Into<String>, class_id: u32, mesh: TriMesh) -> Result<Self> {
        if class_id == 0 {
            return Err(Error::invalid("class 0 is reserved for background"));
        }
        if mesh.vertices().len() < 4 || mesh.faces().is_empty() {
            return Err(Error::invalid("object mesh needs at least 4 vertices and a face"));
        }
        Ok(Self {
            name: name.into(),
            class_id,
            mesh,
            color: [0.8, 0.3, 0.2],
            symmetric: false,
        })
    }

    pub fn control_points(&self) -> ControlPoints {
        fit_control_points(&self.mesh).expect("validated non-empty mesh")
    }

    pub fn diameter(&self) -> f64 {
        self.mesh.diameter()
    }
}

/// Names accepted by [`builtin_model`].
pub const BUILTIN_MODELS: [&str; 5] = ["box", "carton", "can", "mug", "bracket"];

/// Procedural stand-ins for household objects, in meters.
pub fn builtin_mesh(name: &str) -> Result<(TriMesh, bool, [f64; 3])> {
    Ok(match name {
        "box" => (
            TriMesh::cuboid(Vec3::new(0.12, 0.08, 0.05), 24),
            true,
            [0.85, 0.55, 0.2],
        ),
        "carton" => (TriMesh::cuboid(Vec3::new(0.07, 0.07, 0.19), 24), true, [0.9, 0.9, 0.85]),
        "can" => (TriMesh::cylinder(0.033, 0.12, 96, 24), true, [0.75, 0.1, 0.1]),
        "mug" => {
            let body = TriMesh::cylinder(0.04, 0.1, 96, 20);
            let handle = TriMesh::cuboid(Vec3::new(0.03, 0.012, 0.06), 8)
                .transformed(&RigidTransform::from_translation(Vec3::new(0.052, 0.0, 0.0)));
            (body.merged(&handle), false, [0.2, 0.4, 0.8])
        }
        "bracket" => {
            let base = TriMesh::cuboid(Vec3::new(0.14, 0.06, 0.02), 14)
                .transformed(&RigidTransform::from_translation(Vec3::new(0.0, 0.0, -0.04)));
            let upright = TriMesh::cuboid(Vec3::new(0.02, 0.06, 0.08), 8)
                .transformed(&RigidTransform::from_translation(Vec3::new(-0.06, 0.0, 0.0)));
            let gusset = TriMesh::cuboid(Vec3::new(0.04, 0.01, 0.03), 4)
                .transformed(&RigidTransform::from_translation(Vec3::new(-0.03, 0.025, -0.015)));
            (base.merged(&upright).merged(&gusset), false, [0.3, 0.7, 0.3])
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown built-in model `{other}`; expected one of {BUILTIN_MODELS:?}"
            )))
        }
    })
}

pub fn builtin_model(name: &str, class_id: u32) -> Result<ObjectModel> {
    let (mesh, symmetric, color) = builtin_mesh(name)?;
    let mut model = ObjectModel::new(name, class_id, mesh)?;
    model.symmetric = symmetric;
    model.color = color;
    Ok(model)
}

/// Background clutter shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClutterShape {
    Box { extents: [f64; 3] },
    Cylinder { radius: f64, height: f64 },
}

impl ClutterShape {
    pub fn mesh(&self) -> TriMesh {
        match *self {
            ClutterShape::Box { extents } => TriMesh::cuboid(Vec3::from(extents), 4),
            ClutterShape::Cylinder { radius, height } => TriMesh::cylinder(radius, height, 24, 4),
        }
    }
}
