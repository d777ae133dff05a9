use std::path::Path;

use rayon::prelude::*;

use super::{render_depth, sample_layout, CameraModel, LayoutConfig, ObjectModel};
use crate::error::{Error, Result};
use crate::io::{write_json, write_models, write_scene, DatasetManifest, MANIFEST_FILE, MANIFEST_VERSION};
use crate::seed::derive_seed;

fn in_scene(i: usize, e: Error) -> Error {
    match e {
        Error::Io { .. } | Error::Parse { .. } | Error::Format { .. } => e,
        other => Error::Data(format!("scene {i}: {other}")),
    }
}

/// Renders `n_scenes` labeled scenes into `out_dir` with per-scene seeds
/// derived from `master_seed`, then writes the manifest. Scenes are
/// rendered in parallel on the current rayon pool; output is identical for
/// any pool size. The manifest is written only after every scene succeeded.
pub fn generate_dataset(
    models: &[ObjectModel],
    n_scenes: usize,
    camera: &CameraModel,
    layout: &LayoutConfig,
    master_seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    camera.validate()?;
    layout.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let classes = write_models(out_dir, models)?;
    let scenes = (0..n_scenes)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master_seed, i as u64);
            let spec = sample_layout(models, layout, seed).map_err(|e| in_scene(i, e))?;
            let scene = render_depth(&spec, models, camera).map_err(|e| in_scene(i, e))?;
            write_scene(out_dir, i, seed, &scene).map_err(|e| in_scene(i, e))
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        master_seed,
        camera: *camera,
        layout: *layout,
        classes,
        scenes,
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::Dataset;
    use crate::scenegen::builtin_model;

    #[test]
    fn single_scene_layout_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let models = vec![builtin_model("bracket", 1).unwrap(), builtin_model("can", 2).unwrap()];
        let camera = CameraModel::default().downscaled(4);
        let m = generate_dataset(&models, 1, &camera, &LayoutConfig::default(), 5, dir.path()).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(
            names,
            [
                "manifest.json",
                "models",
                "scene_000000.labels.json",
                "scene_000000.ply"
            ]
        );
        let ds = Dataset::open(dir.path()).unwrap();
        assert_eq!(ds.manifest, m);
        let scene = ds.load_scene(0).unwrap();
        assert_eq!(scene.instances.len(), 1);
        assert!(scene.foreground_fraction() > 0.0);
    }

    #[test]
    fn tampered_labels_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let models = vec![builtin_model("box", 1).unwrap()];
        let camera = CameraModel::default().downscaled(8);
        generate_dataset(&models, 1, &camera, &LayoutConfig::default(), 2, dir.path()).unwrap();
        let labels = dir.path().join("scene_000000.labels.json");
        let text = std::fs::read_to_string(&labels).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let mut v2 = v.clone();
        let cp = &mut v2["instances"][0]["control_points"][8][0];
        *cp = serde_json::json!(cp.as_f64().unwrap() + 1e-6);
        std::fs::write(&labels, serde_json::to_string(&v2).unwrap()).unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        assert!(matches!(ds.load_scene(0), Err(Error::Data(_))));

        std::fs::remove_file(&labels).unwrap();
        assert!(Dataset::open(dir.path()).is_err());
    }
}
