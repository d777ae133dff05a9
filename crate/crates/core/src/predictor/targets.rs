use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Vec3, CONTROL_POINT_COUNT};
use crate::pointcloud::BACKGROUND_CLASS;
use crate::scenegen::LabeledScene;

/// Per-keypoint offsets `t = C − P` to the nine control points.
pub type Offsets = [Vec3; CONTROL_POINT_COUNT];

/// Shape of the confidence score as a function of offset error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfidenceParams {
    /// Sharpness.
    pub alpha: f64,
    /// Cut-off distance, meters.
    pub d_th: f64,
}

impl Default for ConfidenceParams {
    fn default() -> Self {
        Self { alpha: 2.0, d_th: 0.06 }
    }
}

impl ConfidenceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.d_th > 0.0) {
            return Err(Error::invalid("confidence alpha and d_th must be positive"));
        }
        Ok(())
    }
}

/// `1 − exp(−α(1 − d/d_th))` below the cut-off, zero at and beyond it.
pub fn confidence_target(d3d: f64, params: &ConfidenceParams) -> f64 {
    if d3d < params.d_th {
        1.0 - (-params.alpha * (1.0 - d3d / params.d_th)).exp()
    } else {
        0.0
    }
}

/// Mean distance between predicted and reference control-point offsets.
pub fn mean_offset_error(pred: &Offsets, gt: &Offsets) -> f64 {
    pred.iter().zip(gt).map(|(p, g)| (p - g).norm()).sum::<f64>() / CONTROL_POINT_COUNT as f64
}

/// Training targets for a set of keypoints.
///
/// `offsets[k]` is `None` for background keypoints. `confidence`, when set,
/// freezes the confidence targets; otherwise they are derived from the
/// current prediction each time the loss is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointTargets {
    pub class_labels: Vec<u32>,
    pub offsets: Vec<Option<Offsets>>,
    pub confidence: Option<Vec<f64>>,
}

impl KeypointTargets {
    pub fn len(&self) -> usize {
        self.class_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.class_labels.iter().filter(|&&c| c != BACKGROUND_CLASS).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.offsets.len() != self.class_labels.len() {
            return Err(Error::invalid("offset targets and class labels differ in length"));
        }
        if let Some(c) = &self.confidence {
            if c.len() != self.class_labels.len() {
                return Err(Error::invalid("confidence targets have the wrong length"));
            }
        }
        for (k, (c, o)) in self.class_labels.iter().zip(&self.offsets).enumerate() {
            match (c, o) {
                (&BACKGROUND_CLASS, _) => {}
                (_, None) => return Err(Error::invalid(format!("foreground keypoint {k} has no offset target"))),
                (_, Some(o)) => {
                    if o.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
                        return Err(Error::invalid(format!("keypoint {k} has non-finite offsets")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Class labels and control-point offsets for the given keypoints of a
/// labeled scene.
pub fn build_targets(scene: &LabeledScene, keypoint_indices: &[usize]) -> Result<KeypointTargets> {
    let labels = scene
        .cloud
        .labels()
        .ok_or_else(|| Error::data("scene cloud carries no labels"))?;
    let points = scene.cloud.points();
    let mut class_labels = Vec::with_capacity(keypoint_indices.len());
    let mut offsets = Vec::with_capacity(keypoint_indices.len());
    for &kp in keypoint_indices {
        let label = *labels
            .get(kp)
            .ok_or_else(|| Error::invalid(format!("keypoint {kp} out of range for {} points", points.len())))?;
        if !label.is_foreground() {
            class_labels.push(BACKGROUND_CLASS);
            offsets.push(None);
            continue;
        }
        let inst = scene.instance(label.instance_id).ok_or_else(|| {
            Error::data(format!(
                "point {kp} is labeled with unknown instance {}",
                label.instance_id
            ))
        })?;
        let p = points[kp].position;
        let cps = inst.control_points.points();
        class_labels.push(label.class_id);
        offsets.push(Some(cps.map(|c| c - p)));
    }
    Ok(KeypointTargets {
        class_labels,
        offsets,
        confidence: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confidence_values() {
        let p = ConfidenceParams::default();
        assert_eq!(confidence_target(0.06, &p), 0.0);
        assert_eq!(confidence_target(1.0, &p), 0.0);
        assert!((confidence_target(0.0, &p) - (1.0 - (-2f64).exp())).abs() < 1e-12);
        assert!((confidence_target(0.03, &p) - (1.0 - (-1f64).exp())).abs() < 1e-12);
        assert!((confidence_target(0.0, &p) - 0.864665).abs() < 1e-6);
        assert!((confidence_target(0.03, &p) - 0.632121).abs() < 1e-6);
    }

    #[test]
    fn confidence_is_monotone_and_bounded() {
        let p = ConfidenceParams::default();
        let mut last = f64::INFINITY;
        for i in 0..=1000 {
            let d = 0.08 * i as f64 / 1000.0;
            let c = confidence_target(d, &p);
            assert!((0.0..1.0).contains(&c));
            assert!(c <= last);
            if d < p.d_th {
                assert!(c < last || i == 0);
            }
            last = c;
        }
    }

    #[test]
    fn offset_is_control_point_minus_position() {
        let gt: Offsets = [Vec3::new(1.0, 0.0, 0.0); 9];
        assert_eq!(mean_offset_error(&gt, &gt), 0.0);
        let c = Vec3::new(2.0, 0.0, 0.0);
        let p = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(c - p, Vec3::new(1.0, 0.0, 0.0));
    }
}
