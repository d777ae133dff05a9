//! Perturbs ground-truth poses on clean synthetic scenes by 5 mm and 3°
//! and refines them with ICP, reporting ADD (ADD-S for symmetric models)
//! before and after and whether the residual decreased monotonically.
//!
//! Usage: `cargo run --release --example icp_refine [trials] [model]`

use pointpose::decoder::{icp_refine, IcpConfig, ModelTemplate, PoseEstimate, MAX_ICP_POINTS};
use pointpose::evaluation::EvalModel;
use pointpose::geometry::{RigidTransform, Vec3};
use pointpose::pointcloud::SpatialIndex;
use pointpose::scenegen::{builtin_model, render_depth, sample_layout, CameraModel, LayoutConfig, BUILTIN_MODELS};
use pointpose::seed::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rotates by `angle` about a random axis through `center`, then shifts by
/// `shift` along a random direction.
fn perturb<R: Rng>(pose: &RigidTransform, center: Vec3, shift: f64, angle: f64, rng: &mut R) -> RigidTransform {
    let mut unit = || loop {
        let v = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if (1e-3..=1.0).contains(&v.norm_squared()) {
            break v.normalize();
        }
    };
    let axis = unit();
    let dir = unit();
    let rot = RigidTransform::from_axis_angle(&axis, angle, Vec3::zeros());
    RigidTransform::from_translation(center + shift * dir)
        .compose(&rot)
        .compose(&RigidTransform::from_translation(-center))
        .compose(pose)
}

fn main() -> pointpose::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let only = args.next();
    let models = BUILTIN_MODELS
        .iter()
        .filter(|n| only.as_deref().is_none_or(|o| o == **n))
        .enumerate()
        .map(|(i, name)| builtin_model(name, i as u32 + 1))
        .collect::<pointpose::Result<Vec<_>>>()?;
    let camera = CameraModel {
        depth_noise_sigma: 0.0,
        ..CameraModel::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut good = 0;
    for t in 0..trials {
        let spec = sample_layout(&models, &LayoutConfig::default(), derive_seed(21, t as u64))?;
        let scene = render_depth(&spec, &models, &camera)?;
        let inst = &scene.instances[0];
        let model = &models[inst.model_id];
        let template = ModelTemplate::from_mesh(model.class_id, &model.mesh, MAX_ICP_POINTS)?;
        let eval = EvalModel::from_mesh(&model.mesh, model.symmetric)?;
        let start = perturb(
            &inst.pose,
            inst.control_points.points()[8],
            0.005,
            3f64.to_radians(),
            &mut rng,
        );
        let estimate = PoseEstimate {
            class_id: model.class_id,
            pose: start,
            score: 1.0,
            refined: false,
            support: 1,
        };
        let index = SpatialIndex::build(&scene.cloud.positions());
        let points = template.visible_points(&start, Some(&scene.camera));
        let out = icp_refine(&estimate, &points, &index, &IcpConfig::default())?;
        let before = eval.pose_error(&inst.pose, &start);
        let after = eval.pose_error(&inst.pose, &out.estimate.pose);
        let monotone = out.rms_history.windows(2).all(|w| w[1] <= w[0]);
        let ok = after < 0.01 * eval.diameter;
        good += ok as usize;
        println!(
            "trial {t:3} {:8} error {:.5} -> {:.5} m ({:.3}% of diameter) iterations {:2} monotone {monotone} {}",
            model.name,
            before,
            after,
            100.0 * after / eval.diameter,
            out.iterations,
            if ok { "ok" } else { "MISS" }
        );
    }
    println!("{good}/{trials} within 1% of the diameter");
    Ok(())
}
