use std::f64::consts::PI;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::models::{ClutterShape, ObjectModel};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, RigidTransform, Vec3};

/// Yaw quantization step.
pub const YAW_STEP_DEG: f64 = 30.0;
/// Attempts allowed for placing all objects of one scene.
pub const RETRY_BUDGET: usize = 1000;

/// One posed object instance; `pose` maps model to world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub model_id: usize,
    pub class_id: u32,
    pub pose: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClutterItem {
    pub shape: ClutterShape,
    pub pose: RigidTransform,
    pub color: [f64; 3],
}

/// Table plane `z = 0` spanning `[-half_extent, half_extent]²`, plus clutter.
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    pub half_extent: f64,
    pub color: [f64; 3],
    pub clutter: Vec<ClutterItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub objects: Vec<Placement>,
    pub background: Background,
    /// Camera to world.
    pub camera_pose: RigidTransform,
    pub seed: u64,
}

/// Camera placement on an upper-hemisphere orbit around the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitConfig {
    pub radius_min: f64,
    pub radius_max: f64,
    /// Elevation above the table plane, degrees.
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            radius_min: 0.7,
            radius_max: 1.0,
            elevation_min_deg: 40.0,
            elevation_max_deg: 80.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    /// Objects per scene.
    pub objects: usize,
    /// Object positions are drawn from `[-workspace_half, workspace_half]²`.
    pub workspace_half: f64,
    /// Minimum distance between object origins, meters.
    pub min_separation: f64,
    pub table_half_extent: f64,
    pub clutter: usize,
    pub orbit: OrbitConfig,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            objects: 1,
            workspace_half: 0.2,
            min_separation: 0.0,
            table_half_extent: 0.5,
            clutter: 0,
            orbit: OrbitConfig::default(),
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<()> {
        let o = &self.orbit;
        if !(self.workspace_half > 0.0) || !(self.table_half_extent > 0.0) || !(self.min_separation >= 0.0) {
            return Err(Error::invalid("layout extents must be positive"));
        }
        if !(0.0 < o.radius_min && o.radius_min <= o.radius_max) {
            return Err(Error::invalid("orbit radius range must be positive and ordered"));
        }
        if !(0.0 < o.elevation_min_deg && o.elevation_min_deg <= o.elevation_max_deg && o.elevation_max_deg < 90.0) {
            return Err(Error::invalid(
                "orbit elevations must satisfy 0 < min ≤ max < 90 degrees",
            ));
        }
        Ok(())
    }
}

/// Camera-to-world transform for a camera at `eye` looking at `target`
/// (x right, y down, z forward), with `up` the world up direction.
pub fn look_at(eye: &Vec3, target: &Vec3, up: &Vec3) -> Result<RigidTransform> {
    let z = (target - eye)
        .try_normalize(1e-12)
        .ok_or_else(|| Error::invalid("camera eye and target coincide"))?;
    let x = z
        .cross(up)
        .try_normalize(1e-12)
        .ok_or_else(|| Error::invalid("viewing direction is parallel to the up vector"))?;
    let y = z.cross(&x);
    RigidTransform::new(Matrix3::from_columns(&[x, y, z]), *eye)
}

pub fn sample_camera_pose<R: Rng + ?Sized>(orbit: &OrbitConfig, rng: &mut R) -> RigidTransform {
    let radius = rng.random_range(orbit.radius_min..=orbit.radius_max);
    let el = rng
        .random_range(orbit.elevation_min_deg..=orbit.elevation_max_deg)
        .to_radians();
    let az = rng.random_range(0.0..2.0 * PI);
    let eye = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * radius;
    look_at(&eye, &Vec3::zeros(), &Vec3::z()).expect("elevation below 90 degrees")
}

/// Upright pose with yaw `k · 30°` and the mesh resting on `z = 0`.
fn upright_pose(bottom_z: f64, x: f64, y: f64, yaw_step: u32) -> RigidTransform {
    let yaw = (yaw_step as f64 * YAW_STEP_DEG).to_radians();
    RigidTransform::from_axis_angle(&Vec3::z(), yaw, Vec3::new(x, y, -bottom_z))
}

fn place<R: Rng + ?Sized>(mesh_aabb: &Aabb, half: f64, rng: &mut R) -> RigidTransform {
    let x = rng.random_range(-half..=half);
    let y = rng.random_range(-half..=half);
    let k = rng.random_range(0..12u32);
    upright_pose(mesh_aabb.min.z, x, y, k)
}

/// World-frame box of `aabb` under `pose`, computed from its corners.
fn world_box(aabb: &Aabb, pose: &RigidTransform) -> Aabb {
    aabb.transformed(pose)
}

/// Random non-overlapping upright placement of `cfg.objects` models plus
/// clutter, and a camera pose on the orbit.
pub fn sample_layout(models: &[ObjectModel], cfg: &LayoutConfig, seed: u64) -> Result<SceneSpec> {
    cfg.validate()?;
    if cfg.objects > 0 && models.is_empty() {
        return Err(Error::invalid("no object models to place"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model_boxes: Vec<Aabb> = models
        .iter()
        .map(|m| m.mesh.aabb().expect("validated model mesh"))
        .collect();

    let mut attempts = 0usize;
    let mut objects: Vec<Placement> = Vec::new();
    let mut occupied: Vec<Aabb> = Vec::new();
    'outer: loop {
        objects.clear();
        occupied.clear();
        for _ in 0..cfg.objects {
            attempts += 1;
            if attempts > RETRY_BUDGET {
                return Err(Error::Layout(format!(
                    "could not place {} objects in a ±{} m workspace within {RETRY_BUDGET} attempts",
                    cfg.objects, cfg.workspace_half
                )));
            }
            let model_id = rng.random_range(0..models.len());
            let pose = place(&model_boxes[model_id], cfg.workspace_half, &mut rng);
            let b = world_box(&model_boxes[model_id], &pose);
            let far_enough = objects
                .iter()
                .all(|o| (o.pose.translation.xy() - pose.translation.xy()).norm() >= cfg.min_separation);
            if !far_enough || occupied.iter().any(|o| o.overlaps(&b)) {
                continue 'outer;
            }
            occupied.push(b);
            objects.push(Placement {
                model_id,
                class_id: models[model_id].class_id,
                pose,
            });
        }
        break;
    }

    let mut clutter = Vec::new();
    let mut clutter_attempts = 0usize;
    while clutter.len() < cfg.clutter && clutter_attempts < RETRY_BUDGET {
        clutter_attempts += 1;
        let shape = if rng.random_bool(0.5) {
            ClutterShape::Box {
                extents: [
                    rng.random_range(0.03..0.12),
                    rng.random_range(0.03..0.12),
                    rng.random_range(0.02..0.1),
                ],
            }
        } else {
            ClutterShape::Cylinder {
                radius: rng.random_range(0.015..0.05),
                height: rng.random_range(0.03..0.12),
            }
        };
        let aabb = shape.mesh().aabb().expect("non-empty primitive");
        let pose = place(&aabb, cfg.table_half_extent * 0.9, &mut rng);
        let b = world_box(&aabb, &pose);
        let gray = rng.random_range(0.3..0.7);
        if occupied.iter().any(|o| o.overlaps(&b)) {
            continue;
        }
        occupied.push(b);
        clutter.push(ClutterItem {
            shape,
            pose,
            color: [gray, gray, gray],
        });
    }

    let camera_pose = sample_camera_pose(&cfg.orbit, &mut rng);
    Ok(SceneSpec {
        objects,
        background: Background {
            half_extent: cfg.table_half_extent,
            color: [0.55, 0.45, 0.35],
            clutter,
        },
        camera_pose,
        seed,
    })
}
