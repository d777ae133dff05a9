use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cloud::{read_cloud, write_cloud};
use super::mesh::{read_mesh, write_mesh};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::evaluation::{EvalModel, SceneTruth, TruthInstance};
use crate::geometry::{ControlPoints, RigidTransform, Vec3};
use crate::scenegen::{CameraModel, InstanceTruth, LabeledScene, LayoutConfig, ObjectModel};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
/// Allowed gap between a stored and a recomputed model diameter, meters.
pub const DIAMETER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub id: u32,
    pub name: String,
    /// Mesh path relative to the dataset root.
    pub mesh: String,
    pub symmetric: bool,
    pub diameter: f64,
    pub color: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub id: usize,
    pub cloud: String,
    pub labels: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub master_seed: u64,
    pub camera: CameraModel,
    pub layout: LayoutConfig,
    pub classes: Vec<ClassEntry>,
    pub scenes: Vec<SceneEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceLabel {
    pub instance_id: u32,
    pub class_id: u32,
    /// Index into the manifest class table.
    pub model_id: usize,
    /// Model to camera frame, 4×4 row-major.
    pub pose: [f64; 16],
    /// Nine control points in the camera frame, corners then centroid.
    pub control_points: [[f64; 3]; 9],
}

/// Per-scene ground truth sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneLabels {
    pub scene_id: usize,
    pub seed: u64,
    /// Camera to world, 4×4 row-major.
    pub camera_pose: [f64; 16],
    pub instances: Vec<InstanceLabel>,
}

impl SceneLabels {
    pub fn from_scene(scene_id: usize, seed: u64, scene: &LabeledScene) -> Self {
        Self {
            scene_id,
            seed,
            camera_pose: scene.camera_pose.to_row_major(),
            instances: scene
                .instances
                .iter()
                .map(|i| InstanceLabel {
                    instance_id: i.instance_id,
                    class_id: i.class_id,
                    model_id: i.model_id,
                    pose: i.pose.to_row_major(),
                    control_points: i.control_points.points().map(|p| [p.x, p.y, p.z]),
                })
                .collect(),
        }
    }
}

pub fn scene_file_stem(id: usize) -> String {
    format!("scene_{id:06}")
}

fn data_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Data(format!("{}: {}", path.display(), message.into()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Parse {
        path: path.to_owned(),
        location: format!(
            "line {} column {} (`{}`)",
            e.inner().line(),
            e.inner().column(),
            e.path()
        ),
        message: e.inner().to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Writes one scene's cloud and label sidecar under `root`.
pub fn write_scene(root: &Path, scene_id: usize, seed: u64, scene: &LabeledScene) -> Result<SceneEntry> {
    let stem = scene_file_stem(scene_id);
    let entry = SceneEntry {
        id: scene_id,
        cloud: format!("{stem}.ply"),
        labels: format!("{stem}.labels.json"),
        seed,
    };
    write_cloud(&root.join(&entry.cloud), &scene.cloud)?;
    write_json(
        &root.join(&entry.labels),
        &SceneLabels::from_scene(scene_id, seed, scene),
    )?;
    Ok(entry)
}

/// Writes each model mesh under `root/models` and returns the class table.
pub fn write_models(root: &Path, models: &[ObjectModel]) -> Result<Vec<ClassEntry>> {
    let dir = root.join("models");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    models
        .iter()
        .map(|m| {
            let rel = format!("models/class_{:02}.ply", m.class_id);
            write_mesh(&root.join(&rel), &m.mesh)?;
            Ok(ClassEntry {
                id: m.class_id,
                name: m.name.clone(),
                mesh: rel,
                symmetric: m.symmetric,
                diameter: m.diameter(),
                color: m.color,
            })
        })
        .collect()
}

/// An opened, validated dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    /// Models in class-table order; `InstanceTruth::model_id` indexes this.
    pub models: Vec<ObjectModel>,
}

impl Dataset {
    /// Reads the manifest, checks that every referenced file exists, that
    /// ids are unique and that stored diameters match the meshes.
    pub fn open(root: &Path) -> Result<Self> {
        let manifest_path = root.join(MANIFEST_FILE);
        let manifest: DatasetManifest = read_json(&manifest_path)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(data_err(
                &manifest_path,
                format!(
                    "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                    manifest.version
                ),
            ));
        }
        manifest
            .camera
            .validate()
            .map_err(|e| data_err(&manifest_path, e.to_string()))?;
        let mut class_ids = BTreeSet::new();
        let mut models = Vec::with_capacity(manifest.classes.len());
        for c in &manifest.classes {
            if !class_ids.insert(c.id) {
                return Err(data_err(&manifest_path, format!("duplicate class id {}", c.id)));
            }
            let mesh_path = root.join(&c.mesh);
            let mesh = read_mesh(&mesh_path)?;
            if !(c.diameter > 0.0) || (mesh.diameter() - c.diameter).abs() > DIAMETER_TOLERANCE {
                return Err(data_err(
                    &manifest_path,
                    format!(
                        "class {} diameter {} does not match its mesh ({})",
                        c.id,
                        c.diameter,
                        mesh.diameter()
                    ),
                ));
            }
            let mut model = ObjectModel::new(&c.name, c.id, mesh).map_err(|e| data_err(&mesh_path, e.to_string()))?;
            model.symmetric = c.symmetric;
            model.color = c.color;
            models.push(model);
        }
        let mut scene_ids = BTreeSet::new();
        for s in &manifest.scenes {
            if !scene_ids.insert(s.id) {
                return Err(data_err(&manifest_path, format!("duplicate scene id {}", s.id)));
            }
            for f in [&s.cloud, &s.labels] {
                if !root.join(f).is_file() {
                    return Err(data_err(
                        &manifest_path,
                        format!("scene {} file `{f}` is missing", s.id),
                    ));
                }
            }
        }
        Ok(Self {
            root: root.to_owned(),
            manifest,
            models,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.scenes.is_empty()
    }

    /// Reads a label sidecar and checks it against the class table; control
    /// points must equal the pose applied to the model control points.
    pub fn read_labels(&self, index: usize) -> Result<(SceneLabels, Vec<InstanceTruth>, RigidTransform)> {
        let entry = &self.manifest.scenes[index];
        let path = self.root.join(&entry.labels);
        let labels: SceneLabels = read_json(&path)?;
        if labels.scene_id != entry.id {
            return Err(data_err(
                &path,
                format!(
                    "labels are for scene {} but the manifest lists {}",
                    labels.scene_id, entry.id
                ),
            ));
        }
        let camera_pose =
            RigidTransform::from_row_major(&labels.camera_pose).map_err(|e| data_err(&path, e.to_string()))?;
        let mut instances = Vec::with_capacity(labels.instances.len());
        for inst in &labels.instances {
            let model = self
                .models
                .get(inst.model_id)
                .filter(|m| m.class_id == inst.class_id)
                .ok_or_else(|| {
                    data_err(
                        &path,
                        format!(
                            "instance {} has model {} / class {} not in the class table",
                            inst.instance_id, inst.model_id, inst.class_id
                        ),
                    )
                })?;
            let pose = RigidTransform::from_row_major(&inst.pose).map_err(|e| data_err(&path, e.to_string()))?;
            let control_points = ControlPoints::from_points(&inst.control_points.map(Vec3::from));
            if control_points != model.control_points().transformed(&pose) {
                return Err(data_err(
                    &path,
                    format!("instance {} control points disagree with its pose", inst.instance_id),
                ));
            }
            instances.push(InstanceTruth {
                instance_id: inst.instance_id,
                class_id: inst.class_id,
                model_id: inst.model_id,
                pose,
                control_points,
            });
        }
        Ok((labels, instances, camera_pose))
    }

    pub fn load_scene(&self, index: usize) -> Result<LabeledScene> {
        let (_, instances, camera_pose) = self.read_labels(index)?;
        let cloud = read_cloud(&self.root.join(&self.manifest.scenes[index].cloud))?;
        Ok(LabeledScene {
            cloud,
            instances,
            camera: self.manifest.camera,
            camera_pose,
        })
    }

    pub fn scene_truth(&self, index: usize) -> Result<SceneTruth> {
        let (labels, instances, _) = self.read_labels(index)?;
        Ok(SceneTruth {
            scene_id: labels.scene_id,
            instances: instances
                .iter()
                .map(|i| TruthInstance {
                    class_id: i.class_id,
                    pose: i.pose,
                })
                .collect(),
        })
    }

    /// Evaluation models keyed by class; `extra_symmetric` adds ADD-S classes.
    pub fn eval_models(&self, extra_symmetric: &[u32]) -> Result<BTreeMap<u32, EvalModel>> {
        self.models
            .iter()
            .map(|m| {
                let sym = m.symmetric || extra_symmetric.contains(&m.class_id);
                Ok((m.class_id, EvalModel::from_mesh(&m.mesh, sym)?))
            })
            .collect()
    }
}
