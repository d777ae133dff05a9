//! Renders synthetic scenes, predicts with the ground-truth oracle and
//! decodes poses, reporting ADD recall at 10% of the model diameter.
//!
//! Usage: `cargo run --release --example oracle_pipeline [scenes] [noise_mm]`

use std::time::Instant;

use pointpose::evaluation::{is_correct, EvalModel};
use pointpose::inference::{build_templates, infer_scene, InferConfig, Predictor};
use pointpose::scenegen::{builtin_model, render_depth, sample_layout, CameraModel, LayoutConfig, BUILTIN_MODELS};
use pointpose::seed::derive_seed;

fn main() -> pointpose::Result<()> {
    let mut args = std::env::args().skip(1);
    let scenes: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let noise_mm: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2.0);

    let models = BUILTIN_MODELS
        .iter()
        .enumerate()
        .map(|(i, name)| builtin_model(name, i as u32 + 1))
        .collect::<pointpose::Result<Vec<_>>>()?;
    let templates = build_templates(&models)?;
    let camera = CameraModel::default();
    let layout = LayoutConfig::default();
    let cfg = InferConfig::default();

    let start = Instant::now();
    let (mut hits, mut total) = (0, 0);
    for s in 0..scenes {
        let spec = sample_layout(&models, &layout, derive_seed(7, s as u64))?;
        let scene = render_depth(&spec, &models, &camera)?;
        let predictor = Predictor::Oracle {
            noise_sigma: noise_mm * 1e-3,
            seed: derive_seed(11, s as u64),
        };
        let out = infer_scene(&scene, predictor, &templates, &cfg)?;
        for inst in &scene.instances {
            let model = &models[inst.model_id];
            let eval = EvalModel::from_mesh(&model.mesh, false)?;
            let best = out
                .report
                .estimates
                .iter()
                .filter(|e| e.class_id == inst.class_id)
                .map(|e| eval.pose_error(&inst.pose, &e.pose))
                .fold(f64::INFINITY, f64::min);
            let ok = is_correct(best, eval.diameter, 0.10);
            hits += ok as usize;
            total += 1;
            println!(
                "scene {s:3} {:8} points {:6} estimates {} ADD {:.5} m ({:.2}% of diameter) {}",
                model.name,
                scene.cloud.len(),
                out.report.estimates.len(),
                best,
                100.0 * best / eval.diameter,
                if ok { "ok" } else { "MISS" }
            );
        }
    }
    println!(
        "recall {hits}/{total} = {:.3} in {:.1} s",
        hits as f64 / total.max(1) as f64,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
