//! File formats: PLY (ASCII and binary little-endian) and OBJ meshes,
//! labeled point-cloud PLY, TOML run configuration, JSONL pose records and
//! the dataset directory layout.

mod cloud;
mod config;
mod dataset;
mod mesh;
mod ply;
mod poses;

use std::path::Path;

use crate::error::{Error, Result};

pub use cloud::{cloud_from_ply, cloud_to_ply, encode_cloud, read_cloud, write_cloud};
pub use config::{load_config, parse_config, GenerateConfig, LoadedConfig, RunConfig};
pub use dataset::{
    scene_file_stem, write_json, write_models, write_scene, ClassEntry, Dataset, DatasetManifest, InstanceLabel,
    SceneEntry, SceneLabels, DIAMETER_TOLERANCE, MANIFEST_FILE, MANIFEST_VERSION,
};
pub use mesh::{encode_obj, mesh_from_ply, mesh_to_ply, parse_obj, read_mesh, write_mesh};
pub use ply::{
    encode_ply, parse_ply, read_ply, PlyColumn, PlyData, PlyElement, PlyFormat, PlyProperty, PropertyKind, ScalarType,
};
pub use poses::{encode_pose_records, parse_pose_records, read_pose_records, write_pose_records};

/// Writes through a sibling temporary file and a rename, so readers never
/// observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
