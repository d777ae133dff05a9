//! End-to-end acceptance checks. Each test prints one PASS/FAIL line with
//! the measured value before asserting.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::Matrix3;
use pointpose::decoder::{icp_refine, DecodeConfig, IcpConfig, ModelTemplate, PoseEstimate, MAX_ICP_POINTS};
use pointpose::evaluation::{add_metric, adds_metric, is_correct, EvalModel};
use pointpose::geometry::{kabsch_align, Aabb, ControlPoints, RigidTransform, Vec3};
use pointpose::inference::{build_templates, infer_scene, InferConfig, Predictor};
use pointpose::pointcloud::{
    farthest_point_sampling, GroupedSample, KeypointConfig, SeedRule, SpatialIndex, FEATURE_DIM,
};
use pointpose::predictor::{
    backward, confidence_target, forward, numeric_gradient, prepare_example, relative_error, ConfidenceParams,
    EncoderParams, KeypointTargets, LossConfig, LossWeights, NetworkShape, TrainConfig, Trainer,
};
use pointpose::scenegen::{
    builtin_model, render_depth, sample_layout, CameraModel, LayoutConfig, ObjectModel, OrbitConfig, BUILTIN_MODELS,
};
use pointpose::seed::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes to the raw stderr handle, bypassing test output capture.
fn verdict(name: &str, pass: bool, detail: impl std::fmt::Display) -> bool {
    let line = format!("[{}] {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::Write::write_all(&mut std::io::stderr(), line.as_bytes());
    pass
}

fn builtin_models(names: &[&str]) -> Vec<ObjectModel> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| builtin_model(n, i as u32 + 1).unwrap())
        .collect()
}

fn random_sample(rng: &mut ChaCha8Rng, k: usize, g: usize) -> GroupedSample {
    GroupedSample {
        keypoint_indices: (0..k).collect(),
        keypoint_positions: (0..k)
            .map(|_| Vec3::from_fn(|_, _| rng.random::<f64>() - 0.5))
            .collect(),
        group_size: g,
        group_radius: 0.05,
        features: (0..k * g * FEATURE_DIM)
            .map(|_| rng.random::<f64>() * 0.1 - 0.05)
            .collect(),
    }
}

fn random_targets(rng: &mut ChaCha8Rng, k: usize, classes: u32) -> KeypointTargets {
    let class_labels: Vec<u32> = (0..k).map(|_| rng.random_range(0..classes)).collect();
    let offsets = class_labels
        .iter()
        .map(|&c| (c != 0).then(|| std::array::from_fn(|_| Vec3::from_fn(|_, _| rng.random::<f64>() * 0.4 - 0.2))))
        .collect();
    KeypointTargets {
        class_labels,
        offsets,
        confidence: Some((0..k).map(|_| rng.random::<f64>()).collect()),
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let start = Instant::now();
    let shape = NetworkShape {
        classes: 3,
        hidden1: 8,
        hidden2: 12,
        hidden3: 10,
    };
    let cfg = LossConfig {
        weights: LossWeights {
            seg: 1.0,
            reg: 3.0,
            conf: 2.0,
        },
        smooth_l1_beta: 0.05,
        ..LossConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 50;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for draw in 0..draws {
        let params = EncoderParams::init(shape, 1000 + draw).unwrap();
        let sample = random_sample(&mut rng, 6, 5);
        let targets = random_targets(&mut rng, 6, 3);
        let (_, grad) = backward(&params, &sample, &targets, &cfg).unwrap();
        for _ in 0..40 {
            let i = rng.random_range(0..params.num_params());
            let num = numeric_gradient(&params, &sample, &targets, &cfg, i, 1e-5).unwrap();
            worst = worst.max(relative_error(grad.get(i), num));
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-4 && secs < 60.0;
    assert!(verdict(
        "gradient check",
        pass,
        format!("{draws} draws, {checked} coordinates, worst relative error {worst:.2e}, {secs:.1} s")
    ));
}

#[test]
fn confidence_function_values_and_monotonicity() {
    let p = ConfidenceParams { alpha: 2.0, d_th: 0.06 };
    let f = |d: f64| confidence_target(d, &p);
    let e0 = (f(0.0) - (1.0 - (-2f64).exp())).abs();
    let eth = f(p.d_th);
    let ehalf = (f(p.d_th / 2.0) - (1.0 - (-1f64).exp())).abs();
    let grid: Vec<f64> = (0..1000).map(|i| f(0.1 * i as f64 / 999.0)).collect();
    let monotone = grid.windows(2).all(|w| w[1] <= w[0]);
    let strict = grid
        .windows(2)
        .enumerate()
        .filter(|(i, _)| 0.1 * (*i + 1) as f64 / 999.0 < p.d_th)
        .all(|(_, w)| w[1] < w[0]);
    let pass = e0 <= 1e-12 && eth == 0.0 && ehalf <= 1e-12 && monotone && strict;
    assert!(verdict(
        "confidence function",
        pass,
        format!("|f(0) - (1 - e^-2)| = {e0:.1e}, f(d_th) = {eth}, |f(d_th/2) - (1 - e^-1)| = {ehalf:.1e}, monotone on 1000 points: {monotone}")
    ));
}

/// Greedy max-min selection recomputing every distance from scratch.
fn brute_force_fps(points: &[Vec3], k: usize) -> Vec<usize> {
    let mut chosen = vec![0usize];
    while chosen.len() < k {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (i, p) in points.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let d = chosen
                .iter()
                .map(|&c| (p - points[c]).norm_squared())
                .fold(f64::INFINITY, f64::min);
            if d > best.0 {
                best = (d, i);
            }
        }
        chosen.push(best.1);
    }
    chosen
}

#[test]
fn farthest_point_sampling_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut mismatches = 0;
    let mut cases = 0;
    for instance in 0..100 {
        let n = rng.random_range(1..=12);
        let mut pts: Vec<Vec3> = (0..n)
            .map(|_| Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)))
            .collect();
        if instance % 5 == 0 && n > 2 {
            // duplicates and lattice points force ties
            pts[n - 1] = pts[0];
            pts[1] = Vec3::new(1.0, 0.0, 0.0);
            pts[2] = Vec3::new(-1.0, 0.0, 0.0);
        }
        for k in 1..=n {
            cases += 1;
            if farthest_point_sampling(&pts, k, SeedRule::LowestIndex).unwrap() != brute_force_fps(&pts, k) {
                mismatches += 1;
            }
        }
    }
    let mut nested = true;
    for n in [2usize, 17, 300, 2048] {
        let pts: Vec<Vec3> = (0..n)
            .map(|_| Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let full = farthest_point_sampling(&pts, n, SeedRule::LowestIndex).unwrap();
        for k in [1, n / 3, n / 2, n - 1].into_iter().filter(|&k| k >= 1) {
            nested &= farthest_point_sampling(&pts, k, SeedRule::LowestIndex).unwrap() == full[..k];
        }
    }
    let pass = mismatches == 0 && nested;
    assert!(verdict(
        "farthest point sampling",
        pass,
        format!("{mismatches} mismatches over {cases} (cloud, K) cases with N <= 12, prefix nesting up to N = 2048: {nested}")
    ));
}

#[test]
fn kabsch_recovers_random_transforms() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_r, mut worst_t, mut worst_det) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let half = Vec3::from_fn(|_, _| rng.random_range(0.01..0.3));
        let aabb = Aabb { min: -half, max: half };
        let centroid = Vec3::from_fn(|i, _| rng.random_range(-half[i]..half[i]));
        let src = ControlPoints::from_aabb(&aabb, centroid).points();
        let truth = RigidTransform::random(&mut rng, 2.0);
        let dst: Vec<Vec3> = src.iter().map(|p| truth.apply(p)).collect();
        let est = kabsch_align(&src, &dst).unwrap();
        worst_r = worst_r.max((est.rotation - truth.rotation).norm());
        worst_t = worst_t.max((est.translation - truth.translation).norm());
        worst_det = worst_det.max((est.rotation.determinant() - 1.0).abs());
    }
    let pass = worst_r < 1e-9 && worst_t < 1e-9 && worst_det < 1e-9;
    assert!(verdict(
        "Kabsch recovery",
        pass,
        format!("1000 transforms, worst rotation error {worst_r:.1e}, translation error {worst_t:.1e}, |det R - 1| {worst_det:.1e}")
    ));
}

fn oracle_recall(models: &[ObjectModel], scenes: usize, noise: f64) -> (usize, usize, f64) {
    let templates = build_templates(models).unwrap();
    let evals: BTreeMap<u32, EvalModel> = models
        .iter()
        .map(|m| (m.class_id, EvalModel::from_mesh(&m.mesh, false).unwrap()))
        .collect();
    let layout = LayoutConfig::default();
    let mut hits = 0;
    let mut total = 0;
    let mut worst = 0.0f64;
    for s in 0..scenes {
        let spec = sample_layout(models, &layout, derive_seed(500, s as u64)).unwrap();
        let scene = render_depth(&spec, models, &CameraModel::default()).unwrap();
        let predictor = Predictor::Oracle {
            noise_sigma: noise,
            seed: derive_seed(600, s as u64),
        };
        let out = infer_scene(&scene, predictor, &templates, &InferConfig::default()).unwrap();
        for inst in &scene.instances {
            let eval = &evals[&inst.class_id];
            let best = out
                .report
                .estimates
                .iter()
                .filter(|e| e.class_id == inst.class_id)
                .map(|e| eval.pose_error(&inst.pose, &e.pose))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best / eval.diameter);
            hits += is_correct(best, eval.diameter, 0.10) as usize;
            total += 1;
        }
    }
    (hits, total, worst)
}

#[test]
fn oracle_pipeline_recovers_single_objects() {
    let start = Instant::now();
    let models = builtin_models(&BUILTIN_MODELS);
    let (clean_hits, clean_total, clean_worst) = oracle_recall(&models, 50, 0.0);
    let (noisy_hits, noisy_total, noisy_worst) = oracle_recall(&models, 50, 0.002);
    let secs = start.elapsed().as_secs_f64();
    let clean = clean_hits as f64 / clean_total as f64;
    let noisy = noisy_hits as f64 / noisy_total as f64;
    let pass = clean == 1.0 && noisy >= 0.95 && secs < 300.0;
    assert!(verdict(
        "oracle pipeline",
        pass,
        format!(
            "sigma 0: {clean_hits}/{clean_total} (worst ADD {:.2}% of diameter), sigma 2 mm: {noisy_hits}/{noisy_total} (worst {:.2}%), {secs:.0} s",
            100.0 * clean_worst,
            100.0 * noisy_worst
        )
    ));
}

fn two_instance_layout() -> LayoutConfig {
    LayoutConfig {
        objects: 2,
        workspace_half: 0.35,
        min_separation: 0.5,
        table_half_extent: 0.8,
        orbit: OrbitConfig {
            radius_min: 1.2,
            radius_max: 1.4,
            ..OrbitConfig::default()
        },
        ..LayoutConfig::default()
    }
}

#[test]
fn two_separated_instances_give_two_estimates() {
    let layout = two_instance_layout();
    let mut exact = 0;
    let mut over = 0;
    let mut counts = Vec::new();
    for s in 0..20usize {
        let name = BUILTIN_MODELS[s % BUILTIN_MODELS.len()];
        let models = builtin_models(&[name]);
        let templates = build_templates(&models).unwrap();
        let spec = sample_layout(&models, &layout, derive_seed(700, s as u64)).unwrap();
        let scene = render_depth(&spec, &models, &CameraModel::default()).unwrap();
        let d = (scene.instances[0].pose.translation - scene.instances[1].pose.translation).norm();
        assert!(d >= 0.5, "instances only {d} m apart");
        let predictor = Predictor::Oracle {
            noise_sigma: 0.002,
            seed: derive_seed(800, s as u64),
        };
        let n = infer_scene(&scene, predictor, &templates, &InferConfig::default())
            .unwrap()
            .report
            .estimates
            .len();
        exact += (n == 2) as usize;
        over += (n > 2) as usize;
        counts.push(n);
    }
    let pass = exact as f64 >= 0.95 * 20.0 && over == 0;
    assert!(verdict(
        "multi-instance decoding",
        pass,
        format!("{exact}/20 scenes with exactly 2 estimates, {over} with more; counts {counts:?}")
    ));
}

/// Rotates by `angle` about a random axis through `center`, then shifts by
/// `shift` along a random direction.
fn perturb(pose: &RigidTransform, center: Vec3, shift: f64, angle: f64, rng: &mut ChaCha8Rng) -> RigidTransform {
    let mut unit = || loop {
        let v = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if (1e-3..=1.0).contains(&v.norm_squared()) {
            break v.normalize();
        }
    };
    let axis = unit();
    let dir = unit();
    RigidTransform::from_translation(center + shift * dir)
        .compose(&RigidTransform::from_axis_angle(&axis, angle, Vec3::zeros()))
        .compose(&RigidTransform::from_translation(-center))
        .compose(pose)
}

#[test]
fn icp_recovers_perturbed_poses() {
    let models = builtin_models(&["bracket"]);
    let model = &models[0];
    let template = ModelTemplate::from_mesh(model.class_id, &model.mesh, MAX_ICP_POINTS).unwrap();
    let eval = EvalModel::from_mesh(&model.mesh, false).unwrap();
    let camera = CameraModel {
        depth_noise_sigma: 0.0,
        ..CameraModel::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 50;
    let (mut good, mut steps, mut monotone_steps) = (0, 0, 0);
    for t in 0..trials {
        let spec = sample_layout(&models, &LayoutConfig::default(), derive_seed(21, t as u64)).unwrap();
        let scene = render_depth(&spec, &models, &camera).unwrap();
        let inst = &scene.instances[0];
        let start = perturb(
            &inst.pose,
            inst.control_points.centroid,
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
        let out = icp_refine(&estimate, &points, &index, &IcpConfig::default()).unwrap();
        good += (eval.pose_error(&inst.pose, &out.estimate.pose) < 0.01 * eval.diameter) as usize;
        for w in out.rms_history.windows(2) {
            steps += 1;
            monotone_steps += (w[1] <= w[0]) as usize;
        }
    }
    let pass = good as f64 >= 0.95 * trials as f64 && monotone_steps == steps;
    assert!(verdict(
        "ICP refinement",
        pass,
        format!("{good}/{trials} within 1% of the diameter, RMS non-increasing in {monotone_steps}/{steps} iterations")
    ));
}

/// Mean distance between corresponding posed vertices, written out per
/// coordinate.
fn brute_add(v: &[Vec3], a: &RigidTransform, b: &RigidTransform) -> f64 {
    v.iter()
        .map(|p| (a.rotation * p + a.translation - (b.rotation * p + b.translation)).norm())
        .sum::<f64>()
        / v.len() as f64
}

/// For each estimate-posed vertex, the distance to the nearest ground-truth-posed vertex.
fn brute_adds(v: &[Vec3], a: &RigidTransform, b: &RigidTransform) -> f64 {
    let pa: Vec<Vec3> = v.iter().map(|p| a.rotation * p + a.translation).collect();
    v.iter()
        .map(|p| {
            let q = b.rotation * p + b.translation;
            pa.iter().map(|r| (q - r).norm()).fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / v.len() as f64
}

#[test]
fn pose_metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst_add, mut worst_adds) = (0.0f64, 0.0f64);
    let mut ordered = true;
    for _ in 0..100 {
        let n = rng.random_range(1..60);
        let v: Vec<Vec3> = (0..n)
            .map(|_| Vec3::from_fn(|_, _| rng.random_range(-0.2..0.2)))
            .collect();
        let gt = RigidTransform::random(&mut rng, 1.0);
        let est = RigidTransform::random(&mut rng, 1.0);
        let add = add_metric(&v, &gt, &est).unwrap();
        let adds = adds_metric(&v, &gt, &est).unwrap();
        worst_add = worst_add.max((add - brute_add(&v, &gt, &est)).abs());
        worst_adds = worst_adds.max((adds - brute_adds(&v, &gt, &est)).abs());
        ordered &= adds <= add;
    }
    let square = [
        Vec3::new(1.0, 1.0, 0.0),
        Vec3::new(-1.0, 1.0, 0.0),
        Vec3::new(-1.0, -1.0, 0.0),
        Vec3::new(1.0, -1.0, 0.0),
    ];
    let quarter = RigidTransform::new(
        Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0),
        Vec3::zeros(),
    )
    .unwrap();
    let id = RigidTransform::identity();
    let sq_add = add_metric(&square, &id, &quarter).unwrap();
    let sq_adds = adds_metric(&square, &id, &quarter).unwrap();
    let pass = worst_add <= 1e-12 && worst_adds <= 1e-12 && ordered && sq_add == 2.0 && sq_adds == 0.0;
    assert!(verdict(
        "ADD and ADD-S",
        pass,
        format!("worst deviation ADD {worst_add:.1e}, ADD-S {worst_adds:.1e}, ADD-S <= ADD in all: {ordered}, square ADD {sq_add}, ADD-S {sq_adds}")
    ));
}

#[test]
fn network_overfits_one_scene() {
    let start = Instant::now();
    let models = builtin_models(&["bracket"]);
    let spec = sample_layout(&models, &LayoutConfig::default(), 5).unwrap();
    let scene = render_depth(&spec, &models, &CameraModel::default()).unwrap();
    let keypoints = KeypointConfig {
        keypoints: 512,
        ..KeypointConfig::default()
    };
    let example = prepare_example(&scene, &keypoints).unwrap();
    let shape = NetworkShape {
        classes: 2,
        ..NetworkShape::default()
    };
    let train = TrainConfig {
        epochs: 500,
        learning_rate: 3e-2,
        ..TrainConfig::default()
    };
    let loss = LossConfig {
        smooth_l1_beta: 0.05,
        ..LossConfig::default()
    };
    let mut trainer = Trainer::new(EncoderParams::init(shape, 1).unwrap(), train, loss).unwrap();
    let data = [example];
    let curve = trainer.run(&data).unwrap();
    let drop = 1.0 - curve.last().unwrap().loss.total / curve[0].loss.total;

    let pred = forward(trainer.params(), &data[0].sample).unwrap();
    let labels = &data[0].targets.class_labels;
    let correct = (0..labels.len()).filter(|&k| pred.argmax_class(k) == labels[k]).count();
    let fg: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] != 0).collect();
    let fg_correct = fg.iter().filter(|&&k| pred.argmax_class(k) == labels[k]).count();
    let accuracy = correct as f64 / labels.len() as f64;

    let cfg = InferConfig {
        keypoints,
        decode: DecodeConfig::default(),
        ..InferConfig::default()
    };
    let out = infer_scene(
        &scene,
        Predictor::Network(trainer.params()),
        &build_templates(&models).unwrap(),
        &cfg,
    )
    .unwrap();
    let eval = EvalModel::from_mesh(&models[0].mesh, false).unwrap();
    let add = out
        .report
        .estimates
        .iter()
        .map(|e| eval.pose_error(&scene.instances[0].pose, &e.pose))
        .fold(f64::INFINITY, f64::min);
    let secs = start.elapsed().as_secs_f64();
    let pass = curve.len() <= 500 && drop >= 0.90 && accuracy >= 0.95 && add < 0.30 * eval.diameter && secs < 600.0;
    assert!(verdict(
        "training smoke test",
        pass,
        format!(
            "{} epochs, loss drop {:.1}%, segmentation accuracy {:.3} (foreground {fg_correct}/{}), ADD {:.1}% of diameter, {secs:.0} s",
            curve.len(),
            100.0 * drop,
            accuracy,
            fg.len(),
            100.0 * add / eval.diameter
        )
    ));
}

fn run_cli(args: &[&str]) {
    let mut full = vec!["pointpose"];
    full.extend_from_slice(args);
    assert_eq!(pointpose::cli::run(full), 0, "pointpose {}", args.join(" "));
}

/// Relative path and contents of every file under `dir` except run reports.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else if path.file_name().unwrap() != pointpose::cli::REPORT_FILE {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn commands_are_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    std::fs::write(
        &config,
        "[keypoints]\nkeypoints = 128\n[train]\nepochs = 2\nlearning_rate = 0.01\n",
    )
    .unwrap();
    let cfg = config.to_str().unwrap();
    let mut runs = Vec::new();
    for r in 0..2 {
        let root = tmp.path().join(format!("run{r}"));
        let p = |s: &str| root.join(s).to_string_lossy().into_owned();
        run_cli(&[
            "--seed",
            "11",
            "--config",
            cfg,
            "generate",
            "--out",
            &p("data"),
            "--scenes",
            "2",
            "--objects",
            "can,bracket",
        ]);
        run_cli(&[
            "--seed",
            "11",
            "--config",
            cfg,
            "train",
            "--dataset",
            &p("data"),
            "--out",
            &p("train"),
        ]);
        run_cli(&[
            "--seed",
            "11",
            "--config",
            cfg,
            "infer",
            "--dataset",
            &p("data"),
            "--checkpoint",
            &p("train/model.ckpt"),
            "--out",
            &p("net"),
        ]);
        run_cli(&[
            "--seed",
            "11",
            "--config",
            cfg,
            "infer",
            "--dataset",
            &p("data"),
            "--oracle",
            "--noise",
            "0.002",
            "--out",
            &p("oracle"),
            "--dump-seg",
        ]);
        runs.push(snapshot(&root));
    }
    let files = runs[0].len();
    let differing: Vec<&String> = runs[0]
        .iter()
        .filter(|(k, v)| runs[1].get(*k) != Some(v))
        .map(|(k, _)| k)
        .collect();
    let pass = differing.is_empty() && runs[0].len() == runs[1].len() && files > 0;
    assert!(verdict(
        "determinism",
        pass,
        format!("generate, train and infer twice: {files} files, differing {differing:?}")
    ));
}
