use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::loss::{backward, LossConfig, LossParts, LossWeights};
use super::network::EncoderParams;
use super::targets::{build_targets, KeypointTargets};
use crate::error::{Error, Result};
use crate::pointcloud::{sample_keypoints, GroupedSample, KeypointConfig};
use crate::scenegen::LabeledScene;
use crate::seed::derive_seed;

/// One grouped scene with its targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub sample: GroupedSample,
    pub targets: KeypointTargets,
}

pub fn prepare_example(scene: &LabeledScene, cfg: &KeypointConfig) -> Result<TrainingExample> {
    let sample = sample_keypoints(&scene.cloud, cfg)?;
    let targets = build_targets(scene, &sample.keypoint_indices)?;
    Ok(TrainingExample { sample, targets })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Segmentation-only epochs run first.
    pub pretrain_epochs: usize,
    /// Full multi-task epochs after pre-training.
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pretrain_epochs: 0,
            epochs: 50,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.pretrain_epochs + self.epochs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Full,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Full => "full",
        }
    }
}

/// Mean loss terms over one epoch, measured before each batch update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub loss: LossParts,
}

/// Momentum SGD over a fixed dataset; resumable from a [`Checkpoint`].
#[derive(Debug, Clone)]
pub struct Trainer {
    params: EncoderParams,
    velocity: EncoderParams,
    epochs_done: usize,
    train: TrainConfig,
    loss: LossConfig,
}

impl Trainer {
    pub fn new(params: EncoderParams, train: TrainConfig, loss: LossConfig) -> Result<Self> {
        train.validate()?;
        loss.validate()?;
        let velocity = EncoderParams::zeros(params.shape);
        Ok(Self {
            params,
            velocity,
            epochs_done: 0,
            train,
            loss,
        })
    }

    pub fn resume(ckpt: Checkpoint, train: TrainConfig, loss: LossConfig) -> Result<Self> {
        let mut t = Self::new(ckpt.params, train, loss)?;
        if let Some(v) = ckpt.velocity {
            let diffs = v.shape_diff(&t.params.shape);
            if !diffs.is_empty() {
                return Err(Error::invalid(format!("velocity shapes: {}", diffs.join("; "))));
            }
            t.velocity = v;
        }
        t.epochs_done = ckpt.epochs_done as usize;
        Ok(t)
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn is_finished(&self) -> bool {
        self.epochs_done >= self.train.total_epochs()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            velocity: Some(self.velocity.clone()),
            epochs_done: self.epochs_done as u64,
        }
    }

    pub fn into_params(self) -> EncoderParams {
        self.params
    }

    fn phase(&self, epoch: usize) -> Phase {
        if epoch < self.train.pretrain_epochs {
            Phase::Pretrain
        } else {
            Phase::Full
        }
    }

    /// Runs the next epoch. The shuffle order depends only on the seed and
    /// the epoch number.
    pub fn run_epoch(&mut self, data: &[TrainingExample]) -> Result<EpochRecord> {
        if data.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let epoch = self.epochs_done;
        let phase = self.phase(epoch);
        let cfg = match phase {
            Phase::Pretrain => LossConfig {
                weights: LossWeights {
                    reg: 0.0,
                    conf: 0.0,
                    ..self.loss.weights
                },
                ..self.loss
            },
            Phase::Full => self.loss,
        };
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            self.train.seed,
            epoch as u64,
        )));

        let mut sum = LossParts::default();
        for batch in order.chunks(self.train.batch_size) {
            let results: Vec<Result<(LossParts, EncoderParams)>> = batch
                .par_iter()
                .map(|&i| backward(&self.params, &data[i].sample, &data[i].targets, &cfg))
                .collect();
            let mut grad = EncoderParams::zeros(self.params.shape);
            let scale = 1.0 / batch.len() as f64;
            for r in results {
                let (parts, g) = r?;
                if !parts.is_finite() {
                    return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}: {parts:?}")));
                }
                grad.add_scaled(&g, scale);
                sum.total += parts.total;
                sum.seg += parts.seg;
                sum.reg += parts.reg;
                sum.conf += parts.conf;
            }
            self.velocity.scale(self.train.momentum);
            self.velocity.add_scaled(&grad, -self.train.learning_rate);
            self.params.add_scaled(&self.velocity, 1.0);
            if !self.params.is_finite() {
                return Err(Error::Numerical(format!("parameters diverged at epoch {epoch}")));
            }
        }
        let n = data.len() as f64;
        let loss = LossParts {
            total: sum.total / n,
            seg: sum.seg / n,
            reg: sum.reg / n,
            conf: sum.conf / n,
        };
        self.epochs_done += 1;
        Ok(EpochRecord { epoch, phase, loss })
    }

    /// Runs the remaining epochs of the schedule.
    pub fn run(&mut self, data: &[TrainingExample]) -> Result<Vec<EpochRecord>> {
        let mut curve = Vec::new();
        while !self.is_finished() {
            curve.push(self.run_epoch(data)?);
        }
        Ok(curve)
    }
}

/// Trains from `params` through the whole schedule.
pub fn train(
    params: EncoderParams,
    data: &[TrainingExample],
    train_cfg: &TrainConfig,
    loss_cfg: &LossConfig,
) -> Result<(EncoderParams, Vec<EpochRecord>)> {
    let mut trainer = Trainer::new(params, *train_cfg, *loss_cfg)?;
    let curve = trainer.run(data)?;
    Ok((trainer.into_params(), curve))
}

pub fn loss_curve_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,phase,total,seg,reg,conf\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch,
            r.phase.as_str(),
            r.loss.total,
            r.loss.seg,
            r.loss.reg,
            r.loss.conf
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::pointcloud::FEATURE_DIM;
    use crate::predictor::network::NetworkShape;
    use rand::Rng;

    fn toy_data(n: usize) -> Vec<TrainingExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        (0..n)
            .map(|_| {
                let k = 6;
                let g = 4;
                let sample = GroupedSample {
                    keypoint_indices: (0..k).collect(),
                    keypoint_positions: (0..k)
                        .map(|_| Vec3::from_fn(|_, _| rng.random::<f64>() * 0.2))
                        .collect(),
                    group_size: g,
                    group_radius: 0.03,
                    features: (0..k * g * FEATURE_DIM)
                        .map(|_| rng.random::<f64>() * 0.06 - 0.03)
                        .collect(),
                };
                let class_labels: Vec<u32> = (0..k as u32).map(|i| i % 2).collect();
                let offsets = class_labels
                    .iter()
                    .map(|&c| (c == 1).then(|| [Vec3::new(0.01, -0.02, 0.03); 9]))
                    .collect();
                TrainingExample {
                    sample,
                    targets: KeypointTargets {
                        class_labels,
                        offsets,
                        confidence: None,
                    },
                }
            })
            .collect()
    }

    fn shape() -> NetworkShape {
        NetworkShape {
            classes: 2,
            hidden1: 8,
            hidden2: 16,
            hidden3: 8,
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let params = EncoderParams::init(shape(), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let (out, curve) = train(params.clone(), &toy_data(3), &cfg, &LossConfig::default()).unwrap();
        assert_eq!(out, params);
        assert_eq!(curve.len(), 3);
        assert!(curve.iter().all(|r| (r.loss.total - curve[0].loss.total).abs() < 1e-12));
    }

    #[test]
    fn same_seed_gives_identical_curves() {
        let cfg = TrainConfig {
            pretrain_epochs: 2,
            epochs: 3,
            learning_rate: 0.05,
            batch_size: 2,
            seed: 9,
            ..TrainConfig::default()
        };
        let data = toy_data(5);
        let run = || {
            let p = EncoderParams::init(shape(), 2).unwrap();
            train(p, &data, &cfg, &LossConfig::default()).unwrap()
        };
        let (p1, c1) = run();
        let (p2, c2) = run();
        assert_eq!(p1, p2);
        assert_eq!(loss_curve_csv(&c1), loss_curve_csv(&c2));
        assert_eq!(c1[0].phase, Phase::Pretrain);
        assert_eq!(c1[2].phase, Phase::Full);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let cfg = TrainConfig {
            pretrain_epochs: 1,
            epochs: 4,
            learning_rate: 0.05,
            batch_size: 2,
            seed: 3,
            ..TrainConfig::default()
        };
        let data = toy_data(4);
        let init = EncoderParams::init(shape(), 4).unwrap();
        let (full, curve) = train(init.clone(), &data, &cfg, &LossConfig::default()).unwrap();

        let mut first = Trainer::new(init, cfg, LossConfig::default()).unwrap();
        let mut resumed_curve = vec![first.run_epoch(&data).unwrap(), first.run_epoch(&data).unwrap()];
        let bytes = first.checkpoint().to_bytes();
        let ckpt = Checkpoint::from_bytes(&bytes, std::path::Path::new("mem")).unwrap();
        let mut second = Trainer::resume(ckpt, cfg, LossConfig::default()).unwrap();
        resumed_curve.extend(second.run(&data).unwrap());
        assert_eq!(second.params(), &full);
        assert_eq!(resumed_curve, curve);
    }

    #[test]
    fn pretraining_only_touches_segmentation() {
        let cfg = TrainConfig {
            pretrain_epochs: 1,
            epochs: 0,
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let init = EncoderParams::init(shape(), 7).unwrap();
        let (out, _) = train(init.clone(), &toy_data(2), &cfg, &LossConfig::default()).unwrap();
        for name in ["reg_hidden", "reg_out", "conf_hidden", "conf_out"] {
            let a = init.layers.iter().find(|l| l.name == name).unwrap();
            let b = out.layers.iter().find(|l| l.name == name).unwrap();
            assert_eq!(a, b, "{name} changed during pre-training");
        }
        assert_ne!(init.layers[0], out.layers[0]);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 1e300,
            ..TrainConfig::default()
        };
        let init = EncoderParams::init(shape(), 7).unwrap();
        let err = train(init, &toy_data(2), &cfg, &LossConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err}");
    }
}
