use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::icp::{icp_refine, IcpConfig, IcpOutcome};
use super::template::ModelTemplate;
use crate::error::{Error, Result};
use crate::geometry::{kabsch_align, ControlPoints, RigidTransform, Vec3, CONTROL_POINT_COUNT};
use crate::pointcloud::SpatialIndex;
use crate::predictor::Prediction;
use crate::scenegen::CameraModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    /// Confidence threshold `τ`.
    pub tau: f64,
    /// Voting cell edge, meters; half the smallest model diameter if unset.
    pub voxel_edge: Option<f64>,
    /// NMS and clustering radius, meters; half the class diameter if unset.
    pub nms_center_dist: Option<f64>,
    /// Run ICP after the control-point solve.
    pub refine: bool,
    pub icp: IcpConfig,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            tau: 0.8,
            voxel_edge: None,
            nms_center_dist: None,
            refine: true,
            icp: IcpConfig::default(),
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::invalid(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        for (name, v) in [
            ("voxel_edge", self.voxel_edge),
            ("nms_center_dist", self.nms_center_dist),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::invalid(format!("{name} must be positive, got {v}")));
                }
            }
        }
        self.icp.validate()
    }
}

/// Box implied by one keypoint: `C = P + t` for all nine control points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxHypothesis {
    pub control_points: [Vec3; CONTROL_POINT_COUNT],
    pub class_id: u32,
    pub confidence: f64,
    pub source_keypoint: usize,
}

impl BoxHypothesis {
    pub fn centroid(&self) -> Vec3 {
        self.control_points[CONTROL_POINT_COUNT - 1]
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PoseEstimate {
    pub class_id: u32,
    /// Model to scene frame.
    pub pose: RigidTransform,
    /// Mean confidence of the supporting hypotheses.
    pub score: f64,
    pub refined: bool,
    /// Number of supporting hypotheses.
    pub support: usize,
}

/// Keeps keypoints whose most probable class is foreground and whose
/// confidence is at least `tau`, and inverts their offsets.
pub fn reconstruct_hypotheses(pred: &Prediction, keypoints: &[Vec3], tau: f64) -> Result<Vec<BoxHypothesis>> {
    pred.validate()?;
    if keypoints.len() != pred.num_keypoints() {
        return Err(Error::invalid(format!(
            "{} keypoint positions for {} predictions",
            keypoints.len(),
            pred.num_keypoints()
        )));
    }
    let mut out = Vec::new();
    for (k, p) in keypoints.iter().enumerate() {
        let class_id = pred.argmax_class(k);
        let confidence = pred.confidence[k];
        if class_id == 0 || !(confidence >= tau) {
            continue;
        }
        out.push(BoxHypothesis {
            control_points: pred.offsets[k].map(|t| p + t),
            class_id,
            confidence,
            source_keypoint: k,
        });
    }
    Ok(out)
}

pub fn voxel_key(p: &Vec3, edge: f64) -> [i64; 3] {
    [0, 1, 2].map(|a| (p[a] / edge).floor() as i64)
}

/// Bins hypotheses by the cell holding their centroid and keeps, per cell,
/// only the most frequent class. Count ties go to the larger summed
/// confidence, then the lower class id. Input order is preserved.
pub fn voxel_vote(hyps: &[BoxHypothesis], edge: f64) -> Result<Vec<BoxHypothesis>> {
    if !(edge > 0.0) {
        return Err(Error::invalid(format!("voxel edge must be positive, got {edge}")));
    }
    let mut tallies: HashMap<[i64; 3], BTreeMap<u32, (usize, f64)>> = HashMap::new();
    for h in hyps {
        let e = tallies
            .entry(voxel_key(&h.centroid(), edge))
            .or_default()
            .entry(h.class_id)
            .or_insert((0, 0.0));
        e.0 += 1;
        e.1 += h.confidence;
    }
    let winners: HashMap<[i64; 3], u32> = tallies
        .into_iter()
        .map(|(key, classes)| {
            let mut best: Option<(u32, usize, f64)> = None;
            for (c, (n, s)) in classes {
                let better = match best {
                    None => true,
                    Some((_, bn, bs)) => n > bn || (n == bn && s > bs),
                };
                if better {
                    best = Some((c, n, s));
                }
            }
            (key, best.expect("non-empty cell").0)
        })
        .collect();
    Ok(hyps
        .iter()
        .filter(|h| winners[&voxel_key(&h.centroid(), edge)] == h.class_id)
        .copied()
        .collect())
}

fn by_confidence(hyps: &[BoxHypothesis]) -> Vec<BoxHypothesis> {
    let mut sorted = hyps.to_vec();
    sorted.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.source_keypoint.cmp(&b.source_keypoint))
    });
    sorted
}

/// Greedy suppression by centroid distance within each class, highest
/// confidence first (lower keypoint index on ties). `center_dist` maps a
/// class id to its suppression radius.
pub fn nms(hyps: &[BoxHypothesis], center_dist: impl Fn(u32) -> f64) -> Vec<BoxHypothesis> {
    let mut kept: Vec<BoxHypothesis> = Vec::new();
    for h in by_confidence(hyps) {
        let r = center_dist(h.class_id);
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == h.class_id && (k.centroid() - h.centroid()).norm() < r);
        if !suppressed {
            kept.push(h);
        }
    }
    kept
}

/// Assigns each hypothesis to the nearest same-class seed within the class
/// radius (earlier seed on ties). Returns one member list per seed.
pub fn assign_clusters(
    seeds: &[BoxHypothesis],
    hyps: &[BoxHypothesis],
    center_dist: impl Fn(u32) -> f64,
) -> Vec<Vec<BoxHypothesis>> {
    let mut clusters = vec![Vec::new(); seeds.len()];
    for h in hyps {
        let r = center_dist(h.class_id);
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in seeds.iter().enumerate() {
            if s.class_id != h.class_id {
                continue;
            }
            let d = (s.centroid() - h.centroid()).norm();
            if d < r && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        if let Some((i, _)) = best {
            clusters[i].push(*h);
        }
    }
    clusters
}

/// Kabsch alignment of the model control points onto the per-index mean of
/// the cluster's control points.
pub fn solve_pose(cluster: &[BoxHypothesis], model_cp: &ControlPoints) -> Result<PoseEstimate> {
    let first = cluster
        .first()
        .ok_or_else(|| Error::PoseSolve("empty cluster".into()))?;
    let n = cluster.len() as f64;
    let mean: Vec<Vec3> = (0..CONTROL_POINT_COUNT)
        .map(|i| cluster.iter().fold(Vec3::zeros(), |a, h| a + h.control_points[i]) / n)
        .collect();
    let pose = kabsch_align(&model_cp.points(), &mean).map_err(|e| Error::PoseSolve(e.to_string()))?;
    Ok(PoseEstimate {
        class_id: first.class_id,
        pose,
        score: cluster.iter().map(|h| h.confidence).sum::<f64>() / n,
        refined: false,
        support: cluster.len(),
    })
}

/// Scene data needed for refinement.
#[derive(Debug, Clone, Copy)]
pub struct DecodeScene<'a> {
    pub index: &'a SpatialIndex,
    /// Enables z-buffer visibility culling of ICP model points.
    pub camera: Option<&'a CameraModel>,
}

/// Stage counts and ICP outcomes of one decode run.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeReport {
    pub estimates: Vec<PoseEstimate>,
    pub hypotheses: usize,
    pub voted: usize,
    pub seeds: usize,
    pub icp: Vec<Option<IcpOutcome>>,
}

/// The full decoding pipeline. At most one NMS seed is kept per voxel, so the
/// estimate count never exceeds the number of occupied voxels. Estimates are
/// sorted by descending score.
pub fn decode_detailed(
    pred: &Prediction,
    keypoints: &[Vec3],
    templates: &BTreeMap<u32, ModelTemplate>,
    scene: Option<DecodeScene<'_>>,
    cfg: &DecodeConfig,
) -> Result<DecodeReport> {
    cfg.validate()?;
    let hyps = reconstruct_hypotheses(pred, keypoints, cfg.tau)?;
    if let Some(h) = hyps.iter().find(|h| !templates.contains_key(&h.class_id)) {
        return Err(Error::data(format!("no model template for class {}", h.class_id)));
    }
    let edge = match cfg.voxel_edge {
        Some(e) => e,
        None => {
            let d = templates.values().map(|t| t.diameter).fold(f64::INFINITY, f64::min);
            if !d.is_finite() {
                return Ok(DecodeReport {
                    estimates: Vec::new(),
                    hypotheses: hyps.len(),
                    voted: 0,
                    seeds: 0,
                    icp: Vec::new(),
                });
            }
            0.5 * d
        }
    };
    let radius = |c: u32| cfg.nms_center_dist.unwrap_or(0.5 * templates[&c].diameter);
    let voted = voxel_vote(&hyps, edge)?;
    let mut occupied = HashSet::new();
    let seeds: Vec<BoxHypothesis> = nms(&voted, radius)
        .into_iter()
        .filter(|s| occupied.insert(voxel_key(&s.centroid(), edge)))
        .collect();
    let clusters = assign_clusters(&seeds, &voted, radius);

    let mut estimates = Vec::with_capacity(seeds.len());
    let mut icp = Vec::with_capacity(seeds.len());
    for cluster in clusters.iter().filter(|c| !c.is_empty()) {
        let template = &templates[&cluster[0].class_id];
        let est = solve_pose(cluster, &template.control_points)?;
        match (cfg.refine, scene) {
            (true, Some(s)) => {
                let points = template.visible_points(&est.pose, s.camera);
                if points.is_empty() {
                    estimates.push(est);
                    icp.push(None);
                } else {
                    let out = icp_refine(&est, &points, s.index, &cfg.icp)?;
                    estimates.push(out.estimate.clone());
                    icp.push(Some(out));
                }
            }
            _ => {
                estimates.push(est);
                icp.push(None);
            }
        }
    }
    let mut order: Vec<usize> = (0..estimates.len()).collect();
    order.sort_by(|&a, &b| estimates[b].score.total_cmp(&estimates[a].score).then(a.cmp(&b)));
    Ok(DecodeReport {
        estimates: order.iter().map(|&i| estimates[i].clone()).collect(),
        hypotheses: hyps.len(),
        voted: voted.len(),
        seeds: seeds.len(),
        icp: order.iter().map(|&i| icp[i].clone()).collect(),
    })
}

pub fn decode(
    pred: &Prediction,
    keypoints: &[Vec3],
    templates: &BTreeMap<u32, ModelTemplate>,
    scene: Option<DecodeScene<'_>>,
    cfg: &DecodeConfig,
) -> Result<Vec<PoseEstimate>> {
    Ok(decode_detailed(pred, keypoints, templates, scene, cfg)?.estimates)
}
