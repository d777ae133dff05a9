use super::CameraModel;
use crate::geometry::{ControlPoints, RigidTransform};
use crate::pointcloud::PointCloud;

/// Ground truth for one object instance in a rendered scene.
///
/// `pose` maps model coordinates into the scene (camera) frame and
/// `control_points` are the model control points under that pose.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceTruth {
    pub instance_id: u32,
    pub class_id: u32,
    pub model_id: usize,
    pub pose: RigidTransform,
    pub control_points: ControlPoints,
}

/// A rendered, labeled scene. The cloud is expressed in the camera frame
/// (sensor at the origin); `camera_pose` places that frame in the world.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScene {
    pub cloud: PointCloud,
    pub instances: Vec<InstanceTruth>,
    pub camera: CameraModel,
    pub camera_pose: RigidTransform,
}

impl LabeledScene {
    pub fn instance(&self, instance_id: u32) -> Option<&InstanceTruth> {
        self.instances.iter().find(|i| i.instance_id == instance_id)
    }

    /// Fraction of points carrying a foreground label.
    pub fn foreground_fraction(&self) -> f64 {
        match self.cloud.labels() {
            Some(labels) if !labels.is_empty() => {
                labels.iter().filter(|l| l.is_foreground()).count() as f64 / labels.len() as f64
            }
            _ => 0.0,
        }
    }

    /// The same scene under a global rigid motion of the scene frame.
    pub fn transformed(&self, t: &RigidTransform) -> LabeledScene {
        LabeledScene {
            cloud: self.cloud.transformed(t),
            instances: self
                .instances
                .iter()
                .map(|inst| InstanceTruth {
                    pose: t.compose(&inst.pose),
                    control_points: inst.control_points.transformed(t),
                    ..inst.clone()
                })
                .collect(),
            camera: self.camera,
            camera_pose: self.camera_pose.compose(&t.inverse()),
        }
    }
}
