use serde::{Deserialize, Serialize};

use super::PoseEstimate;
use crate::error::{Error, Result};
use crate::geometry::{kabsch_align, RigidTransform, Vec3};
use crate::pointcloud::SpatialIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once the RMS improves by less than this, meters.
    pub convergence_eps: f64,
    /// Correspondences farther apart than this are rejected, meters.
    pub max_correspondence_dist: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_eps: 1e-6,
            max_correspondence_dist: 0.02,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || !(self.convergence_eps > 0.0) || !(self.max_correspondence_dist > 0.0) {
            return Err(Error::invalid("ICP settings must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpOutcome {
    pub estimate: PoseEstimate,
    /// Truncated RMS residual before the first and after every accepted
    /// iteration.
    pub rms_history: Vec<f64>,
    pub iterations: usize,
    /// Inlier correspondences at the final pose.
    pub inliers: usize,
    /// Set when an update was discarded for not lowering the residual.
    pub rejected_update: bool,
}

struct Residual {
    /// Mean of `min(d², gate²)` over all model points.
    energy: f64,
    src: Vec<Vec3>,
    dst: Vec<Vec3>,
}

fn residual(pose: &RigidTransform, model: &[Vec3], scene: &SpatialIndex, gate: f64) -> Residual {
    let gate2 = gate * gate;
    let mut energy = 0.0;
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for m in model {
        let q = pose.apply(m);
        match scene.nearest(&q) {
            Some(n) if n.dist2 < gate2 => {
                energy += n.dist2;
                src.push(*m);
                dst.push(scene.points()[n.index]);
            }
            _ => energy += gate2,
        }
    }
    Residual {
        energy: energy / model.len() as f64,
        src,
        dst,
    }
}

/// Point-to-point ICP from model points to a scene.
///
/// Each iteration pairs every model point with its nearest scene point,
/// keeps pairs closer than the gate and re-solves the pose by Kabsch. The
/// residual is the RMS of gate-truncated distances, which this update
/// cannot increase. With fewer than three pairs the input is returned
/// unrefined.
pub fn icp_refine(
    estimate: &PoseEstimate,
    model_points: &[Vec3],
    scene: &SpatialIndex,
    cfg: &IcpConfig,
) -> Result<IcpOutcome> {
    cfg.validate()?;
    if model_points.is_empty() {
        return Err(Error::invalid("ICP needs at least one model point"));
    }
    let unrefined = |iterations: usize, rms: Vec<f64>| IcpOutcome {
        estimate: PoseEstimate {
            refined: false,
            ..estimate.clone()
        },
        rms_history: rms,
        iterations,
        inliers: 0,
        rejected_update: false,
    };
    let gate = cfg.max_correspondence_dist;
    let mut pose = estimate.pose;
    let mut current = residual(&pose, model_points, scene, gate);
    let mut history = vec![current.energy.sqrt()];
    let mut iterations = 0;
    let mut rejected_update = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        if current.src.len() < 3 {
            return Ok(unrefined(iterations, history));
        }
        let Ok(next_pose) = kabsch_align(&current.src, &current.dst) else {
            return Ok(unrefined(iterations, history));
        };
        let next = residual(&next_pose, model_points, scene, gate);
        if next.energy > current.energy {
            rejected_update = true;
            break;
        }
        let improvement = current.energy.sqrt() - next.energy.sqrt();
        pose = next_pose;
        current = next;
        history.push(current.energy.sqrt());
        if improvement < cfg.convergence_eps {
            break;
        }
    }
    Ok(IcpOutcome {
        estimate: PoseEstimate {
            pose,
            refined: true,
            ..estimate.clone()
        },
        rms_history: history,
        iterations,
        inliers: current.src.len(),
        rejected_update,
    })
}
