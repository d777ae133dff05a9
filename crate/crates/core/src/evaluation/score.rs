use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{is_correct, EvalModel};
use crate::decoder::PoseEstimate;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Pose is correct when its error is below this fraction of the
    /// model diameter.
    pub threshold_fraction: f64,
    /// Classes scored with ADD-S in addition to those flagged symmetric
    /// in the dataset.
    pub symmetric_classes: Vec<u32>,
    /// Fractions evaluated in sweep mode.
    pub sweep_fractions: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold_fraction: 0.10,
            symmetric_classes: Vec::new(),
            sweep_fractions: (1..=10).map(|i| i as f64 / 20.0).collect(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_fraction > 0.0) || self.sweep_fractions.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::invalid("threshold fractions must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthInstance {
    pub class_id: u32,
    pub pose: RigidTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub scene_id: usize,
    pub instances: Vec<TruthInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEstimates {
    pub scene_id: usize,
    pub estimates: Vec<PoseEstimate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScore {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl ClassScore {
    fn finish(&mut self) {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        self.recall = ratio(self.tp, self.tp + self.fn_);
        self.precision = ratio(self.tp, self.tp + self.fp);
        let s = self.precision + self.recall;
        self.f1 = if s > 0.0 {
            2.0 * self.precision * self.recall / s
        } else {
            0.0
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scoreboard {
    pub threshold_fraction: f64,
    pub per_class: BTreeMap<u32, ClassScore>,
    /// Totals over all classes.
    pub total: ClassScore,
    /// Unweighted means of the per-class rates.
    pub mean_recall: f64,
    pub mean_precision: f64,
    pub mean_f1: f64,
}

impl Scoreboard {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "threshold {:.2} × diameter\n{:>6} {:>5} {:>5} {:>5} {:>9} {:>9} {:>7}\n",
            self.threshold_fraction, "class", "tp", "fp", "fn", "recall", "precision", "f1"
        );
        let mut row = |name: &str, s: &ClassScore| {
            let _ = writeln!(
                out,
                "{name:>6} {:>5} {:>5} {:>5} {:>9.4} {:>9.4} {:>7.4}",
                s.tp, s.fp, s.fn_, s.recall, s.precision, s.f1
            );
        };
        for (c, s) in &self.per_class {
            row(&c.to_string(), s);
        }
        row("all", &self.total);
        let _ = writeln!(
            out,
            "mean recall {:.4}  mean precision {:.4}  mean f1 {:.4}",
            self.mean_recall, self.mean_precision, self.mean_f1
        );
        out
    }
}

fn index_by_scene<'a, T>(items: &'a [T], id: impl Fn(&T) -> usize, what: &str) -> Result<BTreeMap<usize, &'a T>> {
    let mut map = BTreeMap::new();
    for item in items {
        if map.insert(id(item), item).is_some() {
            return Err(Error::data(format!("duplicate scene id {} in {what}", id(item))));
        }
    }
    Ok(map)
}

/// Greedy per-scene matching: estimates in descending score order each
/// take the unmatched same-class instance with the smallest pose error,
/// counting a true positive when that error is below the threshold.
pub fn score_dataset(
    estimates: &[SceneEstimates],
    truths: &[SceneTruth],
    models: &BTreeMap<u32, EvalModel>,
    cfg: &EvalConfig,
) -> Result<Scoreboard> {
    cfg.validate()?;
    let est_by_scene = index_by_scene(estimates, |s| s.scene_id, "estimates")?;
    let truth_by_scene = index_by_scene(truths, |s| s.scene_id, "ground truth")?;
    if let Some(id) = est_by_scene.keys().find(|id| !truth_by_scene.contains_key(id)) {
        return Err(Error::data(format!("estimates refer to unknown scene {id}")));
    }
    let model = |c: u32| {
        models
            .get(&c)
            .ok_or_else(|| Error::data(format!("no evaluation model for class {c}")))
    };

    let mut per_class: BTreeMap<u32, ClassScore> = BTreeMap::new();
    for (id, truth) in &truth_by_scene {
        let mut ests: Vec<&PoseEstimate> = est_by_scene
            .get(id)
            .map(|s| s.estimates.iter().collect())
            .unwrap_or_default();
        ests.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut matched = vec![false; truth.instances.len()];
        for est in ests {
            let m = model(est.class_id)?;
            let symmetric = m.symmetric || cfg.symmetric_classes.contains(&est.class_id);
            let mut best: Option<(usize, f64)> = None;
            for (i, inst) in truth.instances.iter().enumerate() {
                if matched[i] || inst.class_id != est.class_id {
                    continue;
                }
                let err = if symmetric {
                    super::metrics::adds_metric(&m.adds_vertices, &inst.pose, &est.pose)?
                } else {
                    super::metrics::add_metric(&m.vertices, &inst.pose, &est.pose)?
                };
                if best.is_none_or(|(_, e)| err < e) {
                    best = Some((i, err));
                }
            }
            let entry = per_class.entry(est.class_id).or_default();
            match best {
                Some((i, err)) if is_correct(err, m.diameter, cfg.threshold_fraction) => {
                    matched[i] = true;
                    entry.tp += 1;
                }
                _ => entry.fp += 1,
            }
        }
        for (inst, m) in truth.instances.iter().zip(&matched) {
            model(inst.class_id)?;
            let entry = per_class.entry(inst.class_id).or_default();
            if !m {
                entry.fn_ += 1;
            }
        }
    }

    let mut total = ClassScore::default();
    for s in per_class.values_mut() {
        s.finish();
        total.tp += s.tp;
        total.fp += s.fp;
        total.fn_ += s.fn_;
    }
    total.finish();
    let n = per_class.len().max(1) as f64;
    let classes: BTreeSet<u32> = per_class.keys().copied().collect();
    let mean = |f: fn(&ClassScore) -> f64| classes.iter().map(|c| f(&per_class[c])).sum::<f64>() / n;
    Ok(Scoreboard {
        threshold_fraction: cfg.threshold_fraction,
        mean_recall: mean(|s| s.recall),
        mean_precision: mean(|s| s.precision),
        mean_f1: mean(|s| s.f1),
        per_class,
        total,
    })
}

/// `(fraction, mean recall)` for each sweep fraction, in ascending order.
pub fn recall_sweep(
    estimates: &[SceneEstimates],
    truths: &[SceneTruth],
    models: &BTreeMap<u32, EvalModel>,
    cfg: &EvalConfig,
) -> Result<Vec<(f64, f64)>> {
    let mut fractions = cfg.sweep_fractions.clone();
    fractions.sort_by(f64::total_cmp);
    fractions
        .into_iter()
        .map(|f| {
            let c = EvalConfig {
                threshold_fraction: f,
                ..cfg.clone()
            };
            Ok((f, score_dataset(estimates, truths, models, &c)?.mean_recall))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{TriMesh, Vec3};

    fn models() -> BTreeMap<u32, EvalModel> {
        let mesh = TriMesh::cuboid(Vec3::new(0.1, 0.06, 0.04), 2);
        BTreeMap::from([(1, EvalModel::from_mesh(&mesh, false).unwrap())])
    }

    fn pose(x: f64) -> RigidTransform {
        RigidTransform::from_translation(Vec3::new(x, 0.0, 1.0))
    }

    fn est(x: f64, score: f64) -> PoseEstimate {
        PoseEstimate {
            class_id: 1,
            pose: pose(x),
            score,
            refined: false,
            support: 1,
        }
    }

    fn truth(id: usize, xs: &[f64]) -> SceneTruth {
        SceneTruth {
            scene_id: id,
            instances: xs
                .iter()
                .map(|&x| TruthInstance {
                    class_id: 1,
                    pose: pose(x),
                })
                .collect(),
        }
    }

    #[test]
    fn perfect_and_empty() {
        let truths = vec![truth(0, &[0.0]), truth(1, &[0.0, 0.5])];
        let perfect = vec![
            SceneEstimates {
                scene_id: 0,
                estimates: vec![est(0.0, 0.9)],
            },
            SceneEstimates {
                scene_id: 1,
                estimates: vec![est(0.0, 0.9), est(0.5, 0.8)],
            },
        ];
        let s = score_dataset(&perfect, &truths, &models(), &EvalConfig::default()).unwrap();
        assert_eq!((s.mean_recall, s.mean_precision, s.mean_f1), (1.0, 1.0, 1.0));

        let s = score_dataset(&[], &truths, &models(), &EvalConfig::default()).unwrap();
        assert_eq!(s.total.fn_, 3);
        assert_eq!(s.mean_recall, 0.0);
    }

    #[test]
    fn hand_counted_three_scene_case() {
        // Scene 0: hit. Scene 1: one hit, one miss (FN). Scene 2: hit plus
        // a far-away false positive.
        let truths = vec![truth(0, &[0.0]), truth(1, &[0.0, 0.5]), truth(2, &[0.2])];
        let ests = vec![
            SceneEstimates {
                scene_id: 0,
                estimates: vec![est(0.001, 0.9)],
            },
            SceneEstimates {
                scene_id: 1,
                estimates: vec![est(0.5, 0.9)],
            },
            SceneEstimates {
                scene_id: 2,
                estimates: vec![est(0.2, 0.95), est(0.9, 0.85)],
            },
        ];
        let s = score_dataset(&ests, &truths, &models(), &EvalConfig::default()).unwrap();
        let c = s.per_class[&1];
        assert_eq!((c.tp, c.fp, c.fn_), (3, 1, 1));
        assert!((c.precision - 0.75).abs() < 1e-15);
        assert!((c.recall - 0.75).abs() < 1e-15);
        assert!((c.f1 - 0.75).abs() < 1e-15);
        assert_eq!(c.tp + c.fn_, 4);
        assert_eq!(c.tp + c.fp, 4);
        assert!(s.to_table().contains("all"));
    }

    #[test]
    fn duplicate_and_unknown_scene_ids() {
        let truths = vec![truth(0, &[0.0]), truth(0, &[0.0])];
        assert!(matches!(
            score_dataset(&[], &truths, &models(), &EvalConfig::default()),
            Err(Error::Data(_))
        ));
        let ests = vec![SceneEstimates {
            scene_id: 7,
            estimates: vec![],
        }];
        assert!(score_dataset(&ests, &[truth(0, &[0.0])], &models(), &EvalConfig::default()).is_err());
    }

    #[test]
    fn sweep_is_monotone() {
        let truths: Vec<SceneTruth> = (0..10).map(|i| truth(i, &[0.0])).collect();
        let ests: Vec<SceneEstimates> = (0..10)
            .map(|i| SceneEstimates {
                scene_id: i,
                estimates: vec![est(0.003 * i as f64, 0.9)],
            })
            .collect();
        let sweep = recall_sweep(&ests, &truths, &models(), &EvalConfig::default()).unwrap();
        assert!(sweep.windows(2).all(|w| w[1].1 >= w[0].1));
        assert!(sweep.last().unwrap().1 > sweep[0].1);
    }
}
