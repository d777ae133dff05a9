use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::network::Prediction;
use super::targets::{build_targets, confidence_target, mean_offset_error, ConfidenceParams, Offsets};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scenegen::LabeledScene;

/// Prediction derived from ground truth: one-hot true classes, true offsets
/// plus isotropic Gaussian noise, and the confidence the realized noise
/// earns. Background keypoints get zero offsets and zero confidence.
pub fn oracle_predictor(
    scene: &LabeledScene,
    keypoint_indices: &[usize],
    classes: usize,
    noise_sigma: f64,
    seed: u64,
    params: &ConfidenceParams,
) -> Result<Prediction> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::invalid("oracle noise sigma must be non-negative"));
    }
    let targets = build_targets(scene, keypoint_indices)?;
    if let Some(&c) = targets.class_labels.iter().find(|&&c| c as usize >= classes) {
        return Err(Error::invalid(format!("scene class {c} exceeds {classes} classes")));
    }
    let normal = Normal::new(0.0, noise_sigma).expect("non-negative sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = targets.len();
    let mut class_probs = vec![0.0; k * classes];
    let mut offsets = Vec::with_capacity(k);
    let mut confidence = Vec::with_capacity(k);
    for (i, (&label, gt)) in targets.class_labels.iter().zip(&targets.offsets).enumerate() {
        class_probs[i * classes + label as usize] = 1.0;
        match gt {
            Some(gt) => {
                let noisy: Offsets = std::array::from_fn(|c| gt[c] + Vec3::from_fn(|_, _| normal.sample(&mut rng)));
                confidence.push(confidence_target(mean_offset_error(&noisy, gt), params));
                offsets.push(noisy);
            }
            None => {
                offsets.push([Vec3::zeros(); 9]);
                confidence.push(0.0);
            }
        }
    }
    Ok(Prediction {
        classes,
        class_probs,
        offsets,
        confidence,
    })
}
