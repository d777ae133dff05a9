//! Single-scene inference: keypoint sampling and grouping, prediction by a
//! trained network or the ground-truth oracle, and decoding into poses.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::decoder::{decode_detailed, DecodeConfig, DecodeReport, DecodeScene, ModelTemplate, MAX_ICP_POINTS};
use crate::error::{Error, Result};
use crate::pointcloud::{sample_keypoints, GroupedSample, KeypointConfig, SpatialIndex};
use crate::predictor::{forward, oracle_predictor, ConfidenceParams, EncoderParams, Prediction};
use crate::scenegen::{LabeledScene, ObjectModel};

/// Source of per-keypoint predictions.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Network(&'a EncoderParams),
    /// Ground-truth predictions with Gaussian offset noise of the given
    /// standard deviation (meters).
    Oracle {
        noise_sigma: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InferConfig {
    pub keypoints: KeypointConfig,
    pub decode: DecodeConfig,
    pub confidence: ConfidenceParams,
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTiming {
    pub sampling_ms: f64,
    pub prediction_ms: f64,
    pub decoding_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneInference {
    pub sample: GroupedSample,
    pub prediction: Prediction,
    pub report: DecodeReport,
    pub timing: StageTiming,
}

/// Decoder templates keyed by class id. Class ids must be unique.
pub fn build_templates(models: &[ObjectModel]) -> Result<BTreeMap<u32, ModelTemplate>> {
    let mut out = BTreeMap::new();
    for m in models {
        let t = ModelTemplate::from_mesh(m.class_id, &m.mesh, MAX_ICP_POINTS)?;
        if out.insert(m.class_id, t).is_some() {
            return Err(Error::data(format!(
                "class {} is used by more than one model",
                m.class_id
            )));
        }
    }
    Ok(out)
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs the full pipeline on one scene. The oracle reads the scene labels;
/// the network sees only the unlabeled cloud.
pub fn infer_scene(
    scene: &LabeledScene,
    predictor: Predictor<'_>,
    templates: &BTreeMap<u32, ModelTemplate>,
    cfg: &InferConfig,
) -> Result<SceneInference> {
    let t0 = Instant::now();
    let sample = sample_keypoints(&scene.cloud, &cfg.keypoints)?;
    let sampling_ms = elapsed_ms(t0);

    let t1 = Instant::now();
    let prediction = match predictor {
        Predictor::Network(params) => forward(params, &sample)?,
        Predictor::Oracle { noise_sigma, seed } => {
            let max_class = templates
                .keys()
                .chain(scene.instances.iter().map(|i| &i.class_id))
                .max()
                .copied()
                .unwrap_or(0);
            oracle_predictor(
                scene,
                &sample.keypoint_indices,
                max_class as usize + 1,
                noise_sigma,
                seed,
                &cfg.confidence,
            )?
        }
    };
    let prediction_ms = elapsed_ms(t1);

    let t2 = Instant::now();
    let index = SpatialIndex::build(&scene.cloud.positions());
    let report = decode_detailed(
        &prediction,
        &sample.keypoint_positions,
        templates,
        Some(DecodeScene {
            index: &index,
            camera: Some(&scene.camera),
        }),
        &cfg.decode,
    )?;
    let decoding_ms = elapsed_ms(t2);

    Ok(SceneInference {
        sample,
        prediction,
        report,
        timing: StageTiming {
            sampling_ms,
            prediction_ms,
            decoding_ms,
        },
    })
}
