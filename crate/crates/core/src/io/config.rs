use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::DecodeConfig;
use crate::error::{Error, Result};
use crate::evaluation::EvalConfig;
use crate::pointcloud::KeypointConfig;
use crate::predictor::{LossConfig, NetworkShape, TrainConfig};
use crate::scenegen::{CameraModel, LayoutConfig, BUILTIN_MODELS};

/// Dataset generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub scenes: usize,
    /// Built-in model names or OBJ/PLY mesh paths; class ids follow list order
    /// starting at 1.
    pub objects: Vec<String>,
    /// Classes scored with ADD-S. Built-in models carry their own flag.
    pub symmetric: Vec<String>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            scenes: 10,
            objects: BUILTIN_MODELS.iter().map(|s| s.to_string()).collect(),
            symmetric: Vec::new(),
        }
    }
}

/// Every tunable of a run, with documented defaults for absent keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub generate: GenerateConfig,
    pub keypoints: KeypointConfig,
    pub network: NetworkShape,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub camera: CameraModel,
    pub layout: LayoutConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let section = |name: &str, r: Result<()>| {
            r.map_err(|e| Error::Config {
                key: name.to_owned(),
                message: e.to_string(),
            })
        };
        section("network", self.network.validate())?;
        section("loss", self.loss.validate())?;
        section("decode", self.decode.validate())?;
        section("camera", self.camera.validate())?;
        section("layout", self.layout.validate())?;
        section("eval", self.eval.validate())?;
        if self.keypoints.group_size == 0 || !(self.keypoints.radius > 0.0) {
            return Err(Error::Config {
                key: "keypoints".into(),
                message: "group_size and radius must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config {
            key: String::new(),
            message: e.to_string(),
        })
    }
}

/// A parsed configuration plus one warning per unrecognized key.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

fn key_paths(value: &toml::Value, prefix: &str, out: &mut BTreeSet<String>) {
    if let toml::Value::Table(t) = value {
        for (k, v) in t {
            let path = if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            };
            key_paths(v, &path, out);
            out.insert(path);
        }
    }
}

/// Parses TOML text; `path` is used in diagnostics only.
pub fn parse_config(text: &str, path: &Path) -> Result<LoadedConfig> {
    let value: toml::Value = toml::from_str::<toml::Table>(text)
        .map(toml::Value::Table)
        .map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                path: path.to_owned(),
                location: format!("line {line}"),
                message: e.message().to_owned(),
            }
        })?;
    let config: RunConfig = serde_path_to_error::deserialize(value.clone()).map_err(|e| Error::Config {
        key: e.path().to_string(),
        message: e.inner().message().to_owned(),
    })?;
    config.validate()?;

    let effective = toml::Value::try_from(&config).map_err(|e| Error::Config {
        key: String::new(),
        message: e.to_string(),
    })?;
    let mut known = BTreeSet::new();
    key_paths(&effective, "", &mut known);
    let mut given = BTreeSet::new();
    key_paths(&value, "", &mut given);
    let warnings = given
        .difference(&known)
        .filter(|k| {
            // Only report the outermost unknown key.
            k.rsplit_once('.').is_none_or(|(parent, _)| known.contains(parent))
        })
        .map(|k| format!("{}: unknown config key `{k}` ignored", path.display()))
        .collect::<Vec<_>>();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(LoadedConfig { config, warnings })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LoadedConfig> {
        parse_config(text, Path::new("run.toml"))
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.config, RunConfig::default());
        assert!(c.warnings.is_empty());
        let d = &c.config;
        assert_eq!(
            (d.keypoints.keypoints, d.keypoints.group_size, d.keypoints.radius),
            (4096, 32, 0.03)
        );
        assert_eq!((d.loss.confidence.alpha, d.loss.confidence.d_th), (2.0, 0.06));
        assert_eq!(d.decode.tau, 0.8);
        assert_eq!(d.eval.threshold_fraction, 0.10);
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let c = parse("[decode]\ntau = 0.5\nfoo = 1\n[decode.icp]\nmax_iterations = 7\n[bogus]\nx = 2\n").unwrap();
        assert_eq!(c.config.decode.tau, 0.5);
        assert_eq!(c.config.decode.icp.max_iterations, 7);
        assert_eq!(c.warnings.len(), 2, "{:?}", c.warnings);
        assert!(c.warnings.iter().any(|w| w.contains("`decode.foo`")));
        assert!(c.warnings.iter().any(|w| w.contains("`bogus`")));
    }

    #[test]
    fn type_mismatch_names_the_key() {
        match parse("[keypoints]\ngroup_size = \"many\"\n") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "keypoints.group_size"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("[decode\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("[decode]\ntau = 2.0\n"), Err(Error::Config { .. })));
    }

    #[test]
    fn dump_then_load_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.decode.voxel_edge = Some(0.04);
        cfg.train.epochs = 3;
        cfg.seed = 99;
        cfg.generate.objects = vec!["can".into(), "meshes/part.obj".into()];
        let text = cfg.to_toml().unwrap();
        let back = parse(&text).unwrap();
        assert_eq!(back.config, cfg);
        assert!(back.warnings.is_empty());
    }
}
