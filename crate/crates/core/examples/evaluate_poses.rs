//! Scores perturbed copies of ground-truth poses with ADD, ADD-S and the
//! recall sweep over diameter fractions.
//!
//! Usage: `cargo run --release --example evaluate_poses [scenes] [error_mm]`

use std::collections::BTreeMap;

use pointpose::decoder::PoseEstimate;
use pointpose::evaluation::{
    recall_sweep, score_dataset, EvalConfig, EvalModel, SceneEstimates, SceneTruth, TruthInstance,
};
use pointpose::geometry::{RigidTransform, Vec3};
use pointpose::scenegen::builtin_model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> pointpose::Result<()> {
    let mut args = std::env::args().skip(1);
    let scenes: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let error_mm: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(10.0);

    let names = ["box", "can", "bracket"];
    let mut models = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        let model = builtin_model(name, i as u32 + 1)?;
        models.insert(i as u32 + 1, EvalModel::from_mesh(&model.mesh, *name == "can")?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut truths = Vec::new();
    let mut estimates = Vec::new();
    for scene_id in 0..scenes {
        let class_id = (scene_id % names.len()) as u32 + 1;
        let pose = RigidTransform::random(&mut rng, 0.5);
        let shift = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize() * error_mm * 1e-3;
        let estimate = PoseEstimate {
            class_id,
            pose: RigidTransform::from_translation(shift).compose(&pose),
            score: 1.0,
            refined: false,
            support: 1,
        };
        truths.push(SceneTruth {
            scene_id,
            instances: vec![TruthInstance { class_id, pose }],
        });
        estimates.push(SceneEstimates {
            scene_id,
            estimates: vec![estimate],
        });
    }
    let cfg = EvalConfig::default();
    println!("{}", score_dataset(&estimates, &truths, &models, &cfg)?.to_table());
    for (fraction, recall) in recall_sweep(&estimates, &truths, &models, &cfg)? {
        println!("threshold {fraction:.2} x diameter  recall {recall:.3}");
    }
    Ok(())
}
