//! Overfits the keypoint network to a single rendered scene, then decodes
//! poses with the trained network.
//!
//! Usage: `cargo run --release --example train_overfit [epochs] [learning_rate] [tau] [smooth_l1_beta] [model]`

use std::time::Instant;

use pointpose::decoder::DecodeConfig;
use pointpose::evaluation::EvalModel;
use pointpose::inference::{build_templates, infer_scene, InferConfig, Predictor};
use pointpose::pointcloud::KeypointConfig;
use pointpose::predictor::{
    forward, mean_offset_error, prepare_example, EncoderParams, LossConfig, NetworkShape, TrainConfig, Trainer,
};
use pointpose::scenegen::{builtin_model, render_depth, sample_layout, CameraModel, LayoutConfig};

fn main() -> pointpose::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    let learning_rate: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let tau: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.8);
    let beta: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let name = args.next().unwrap_or_else(|| "bracket".into());

    let models = vec![builtin_model(&name, 1)?];
    let spec = sample_layout(&models, &LayoutConfig::default(), 5)?;
    let scene = render_depth(&spec, &models, &CameraModel::default())?;
    let keypoints = KeypointConfig {
        keypoints: 512,
        ..KeypointConfig::default()
    };
    let example = prepare_example(&scene, &keypoints)?;
    let shape = NetworkShape {
        classes: 2,
        ..NetworkShape::default()
    };
    let train = TrainConfig {
        epochs,
        learning_rate,
        ..TrainConfig::default()
    };
    let loss = LossConfig {
        smooth_l1_beta: beta,
        ..LossConfig::default()
    };
    let mut trainer = Trainer::new(EncoderParams::init(shape, 1)?, train, loss)?;

    let start = Instant::now();
    let data = [example];
    let mut first = None;
    while !trainer.is_finished() {
        let rec = trainer.run_epoch(&data)?;
        let first_loss = *first.get_or_insert(rec.loss.total);
        if rec.epoch % 25 == 0 || trainer.is_finished() {
            let pred = forward(trainer.params(), &data[0].sample)?;
            let labels = &data[0].targets.class_labels;
            let correct = (0..labels.len()).filter(|&k| pred.argmax_class(k) == labels[k]).count();
            let fg: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] != 0).collect();
            let d3d = fg
                .iter()
                .map(|&k| {
                    mean_offset_error(
                        &pred.offsets[k],
                        data[0].targets.offsets[k].as_ref().expect("foreground"),
                    )
                })
                .sum::<f64>()
                / fg.len().max(1) as f64;
            let conf = fg.iter().map(|&k| pred.confidence[k]).fold(0.0, f64::max);
            println!(
                "epoch {:4} loss {:.5} (seg {:.4} reg {:.4} conf {:.4}) drop {:5.1}% seg acc {:.3} fg {} d3d {:.1} mm max conf {:.3}",
                rec.epoch,
                rec.loss.total,
                rec.loss.seg,
                rec.loss.reg,
                rec.loss.conf,
                100.0 * (1.0 - rec.loss.total / first_loss),
                correct as f64 / labels.len() as f64,
                fg.len(),
                1e3 * d3d,
                conf
            );
        }
    }
    let cfg = InferConfig {
        keypoints,
        decode: DecodeConfig {
            tau,
            ..DecodeConfig::default()
        },
        ..InferConfig::default()
    };
    let out = infer_scene(
        &scene,
        Predictor::Network(trainer.params()),
        &build_templates(&models)?,
        &cfg,
    )?;
    let eval = EvalModel::from_mesh(&models[0].mesh, false)?;
    let truth = &scene.instances[0];
    let best = out
        .report
        .estimates
        .iter()
        .map(|e| eval.pose_error(&truth.pose, &e.pose))
        .fold(f64::INFINITY, f64::min);
    println!(
        "{} estimates, best ADD {:.4} m = {:.1}% of diameter, {:.1} s",
        out.report.estimates.len(),
        best,
        100.0 * best / eval.diameter,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
