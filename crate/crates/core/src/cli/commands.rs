use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::report::RunReport;
use super::viz::{box_line_set_obj, box_line_set_ply, confidence_cloud, estimate_boxes, segmentation_cloud};
use super::{CliError, EvalArgs, ExportVizArgs, GenerateArgs, InferArgs, PredictorArgs, TrainArgs};
use crate::error::{Error, Result};
use crate::evaluation::{recall_sweep, score_dataset, EvalConfig, SceneEstimates};
use crate::inference::{build_templates, infer_scene, InferConfig, Predictor, SceneInference};
use crate::io::{
    encode_ply, read_mesh, read_pose_records, scene_file_stem, write_atomic, write_cloud, write_pose_records, Dataset,
    PlyFormat, RunConfig, MANIFEST_FILE,
};
use crate::predictor::{
    loss_curve_csv, prepare_example, Checkpoint, EncoderParams, NetworkShape, TrainConfig, Trainer,
};
use crate::scenegen::{builtin_model, generate_dataset, ObjectModel, BUILTIN_MODELS};
use crate::seed::derive_seed;

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Resolves built-in names and mesh paths into models with class ids
/// 1, 2, … in list order. Every mesh is read before anything is written.
pub fn resolve_models(objects: &[String], symmetric: &[String]) -> Result<Vec<ObjectModel>> {
    if objects.is_empty() {
        return Err(Error::invalid("no objects given"));
    }
    objects
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let class_id = i as u32 + 1;
            let mut model = if BUILTIN_MODELS.contains(&name.as_str()) {
                builtin_model(name, class_id)?
            } else {
                let path = Path::new(name);
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(name);
                ObjectModel::new(stem, class_id, read_mesh(path)?).map_err(|e| Error::Data(format!("{name}: {e}")))?
            };
            if symmetric.iter().any(|s| s == name || *s == model.name) {
                model.symmetric = true;
            }
            Ok(model)
        })
        .collect()
}

pub fn cmd_generate(cfg: &RunConfig, args: &GenerateArgs) -> Result<RunReport, CliError> {
    let objects = if args.objects.is_empty() {
        &cfg.generate.objects
    } else {
        &args.objects
    };
    let models = resolve_models(objects, &cfg.generate.symmetric)?;
    let mut layout = cfg.layout;
    if let Some(k) = args.per_scene {
        layout.objects = k;
    }
    let scenes = args.scenes.unwrap_or(cfg.generate.scenes);

    let t = Instant::now();
    let manifest = generate_dataset(&models, scenes, &cfg.camera, &layout, cfg.seed, &args.out)?;
    let mut report = RunReport::new("generate", cfg, &args.out)?;
    report.time("generate", elapsed_ms(t));
    report.count("scenes", manifest.scenes.len());
    report.count("classes", manifest.classes.len());
    report.record(MANIFEST_FILE)?;
    for c in &manifest.classes {
        report.record(&c.mesh)?;
    }
    for s in &manifest.scenes {
        report.record(&s.cloud)?;
        report.record(&s.labels)?;
    }
    Ok(report)
}

/// Positions in the manifest of the requested scene ids, or of all scenes.
fn scene_indices(ds: &Dataset, ids: &[usize]) -> Result<Vec<usize>> {
    if ids.is_empty() {
        return Ok((0..ds.len()).collect());
    }
    ids.iter()
        .map(|id| {
            ds.manifest
                .scenes
                .iter()
                .position(|s| s.id == *id)
                .ok_or_else(|| Error::Data(format!("scene {id} is not in {}", ds.root.display())))
        })
        .collect()
}

/// One output channel per class id present, plus background.
fn dataset_classes(ds: &Dataset) -> usize {
    ds.manifest.classes.iter().map(|c| c.id).max().unwrap_or(0) as usize + 1
}

fn class_colors(ds: &Dataset) -> BTreeMap<u32, [f64; 3]> {
    ds.manifest.classes.iter().map(|c| (c.id, c.color)).collect()
}

pub fn cmd_train(cfg: &RunConfig, args: &TrainArgs) -> Result<RunReport, CliError> {
    let ds = Dataset::open(&args.dataset)?;
    let shape = NetworkShape {
        classes: dataset_classes(&ds),
        ..cfg.network
    };
    shape.validate()?;
    let train_cfg = TrainConfig {
        epochs: args.epochs.unwrap_or(cfg.train.epochs),
        pretrain_epochs: args.pretrain_epochs.unwrap_or(cfg.train.pretrain_epochs),
        ..cfg.train
    };
    let indices = scene_indices(&ds, &args.scenes)?;

    let t = Instant::now();
    let data = indices
        .par_iter()
        .map(|&i| prepare_example(&ds.load_scene(i)?, &cfg.keypoints))
        .collect::<Result<Vec<_>>>()?;
    let prepare_ms = elapsed_ms(t);

    let mut trainer = match &args.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            ckpt.ensure_shape(&shape)?;
            Trainer::resume(ckpt, train_cfg, cfg.loss)?
        }
        None => Trainer::new(EncoderParams::init(shape, train_cfg.seed)?, train_cfg, cfg.loss)?,
    };
    let start_epoch = trainer.epochs_done();
    let t = Instant::now();
    let curve = trainer.run(&data)?;
    let train_ms = elapsed_ms(t);

    create_dir(&args.out)?;
    let mut report = RunReport::new("train", cfg, &args.out)?;
    trainer.checkpoint().save(&args.out.join("model.ckpt"))?;
    write_atomic(&args.out.join("loss.csv"), loss_curve_csv(&curve).as_bytes())?;
    report.record("model.ckpt")?;
    report.record("loss.csv")?;
    report.time("sampling_grouping", prepare_ms);
    report.time("training", train_ms);
    report.count("scenes", data.len());
    report.count("keypoints", data.iter().map(|d| d.sample.keypoint_indices.len()).sum());
    report.count("start_epoch", start_epoch);
    report.count("epochs_done", trainer.epochs_done());
    report.count("parameters", trainer.params().num_params());
    if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
        report.metric("first_loss", first.loss.total);
        report.metric("final_loss", last.loss.total);
    }
    Ok(report)
}

/// A loaded checkpoint or oracle settings.
enum Source {
    Network(EncoderParams),
    Oracle { noise_sigma: f64, master_seed: u64 },
}

impl Source {
    fn load(args: &PredictorArgs, ds: &Dataset, cfg: &RunConfig) -> Result<Self> {
        match &args.checkpoint {
            Some(path) => {
                let ckpt = Checkpoint::load(path)?;
                let classes = dataset_classes(ds);
                if ckpt.params.shape.classes != classes {
                    return Err(Error::Data(format!(
                        "{} predicts {} classes but the dataset has {classes} (including background)",
                        path.display(),
                        ckpt.params.shape.classes
                    )));
                }
                Ok(Source::Network(ckpt.params))
            }
            None => Ok(Source::Oracle {
                noise_sigma: args.noise.unwrap_or(0.0),
                master_seed: cfg.seed,
            }),
        }
    }

    fn predictor(&self, scene_id: usize) -> Predictor<'_> {
        match self {
            Source::Network(p) => Predictor::Network(p),
            Source::Oracle {
                noise_sigma,
                master_seed,
            } => Predictor::Oracle {
                noise_sigma: *noise_sigma,
                seed: derive_seed(*master_seed, scene_id as u64),
            },
        }
    }
}

fn infer_config(cfg: &RunConfig, args: &PredictorArgs) -> InferConfig {
    let mut decode = cfg.decode;
    if args.no_refine {
        decode.refine = false;
    }
    InferConfig {
        keypoints: cfg.keypoints,
        decode,
        confidence: cfg.loss.confidence,
    }
}

pub fn cmd_infer(cfg: &RunConfig, args: &InferArgs) -> Result<RunReport, CliError> {
    args.predictor.check()?;
    let ds = Dataset::open(&args.dataset)?;
    let source = Source::load(&args.predictor, &ds, cfg)?;
    let templates = build_templates(&ds.models)?;
    let icfg = infer_config(cfg, &args.predictor);
    let indices = scene_indices(&ds, &args.scenes)?;

    let results: Vec<(usize, SceneInference)> = indices
        .par_iter()
        .map(|&i| {
            let id = ds.manifest.scenes[i].id;
            let scene = ds.load_scene(i)?;
            let out = infer_scene(&scene, source.predictor(id), &templates, &icfg).map_err(|e| match e {
                Error::Numerical(m) => Error::Numerical(format!("scene {id}: {m}")),
                other => other,
            })?;
            Ok((id, out))
        })
        .collect::<Result<_>>()?;

    create_dir(&args.out)?;
    let mut report = RunReport::new("infer", cfg, &args.out)?;
    let records: Vec<SceneEstimates> = results
        .iter()
        .map(|(id, r)| SceneEstimates {
            scene_id: *id,
            estimates: r.report.estimates.clone(),
        })
        .collect();
    write_pose_records(&args.out.join("poses.jsonl"), &records)?;
    report.record("poses.jsonl")?;
    if args.dump_seg {
        let colors = class_colors(&ds);
        create_dir(&args.out.join("seg"))?;
        for (id, r) in &results {
            let rel = format!("seg/{}.ply", scene_file_stem(*id));
            let cloud = segmentation_cloud(&r.sample.keypoint_positions, &r.prediction, |c| {
                colors.get(&c).copied().unwrap_or([1.0, 1.0, 1.0])
            });
            write_cloud(&args.out.join(&rel), &cloud)?;
            report.record(&rel)?;
        }
    }
    for (_, r) in &results {
        report.time("sampling_grouping", r.timing.sampling_ms);
        report.time("prediction", r.timing.prediction_ms);
        report.time("decoding", r.timing.decoding_ms);
    }
    report.count("scenes", results.len());
    report.count(
        "keypoints",
        results.iter().map(|(_, r)| r.sample.keypoint_indices.len()).sum(),
    );
    report.count("estimates", records.iter().map(|r| r.estimates.len()).sum());
    Ok(report)
}

pub fn cmd_eval(cfg: &RunConfig, args: &EvalArgs) -> Result<RunReport, CliError> {
    let ds = Dataset::open(&args.dataset)?;
    let records = read_pose_records(&args.poses)?;
    let ids: Vec<usize> = records.iter().map(|r| r.scene_id).collect();
    let truths = scene_indices(&ds, &ids)?
        .into_iter()
        .map(|i| ds.scene_truth(i))
        .collect::<Result<Vec<_>>>()?;
    let eval_cfg = EvalConfig {
        threshold_fraction: args.threshold.unwrap_or(cfg.eval.threshold_fraction),
        ..cfg.eval.clone()
    };
    eval_cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let models = ds.eval_models(&eval_cfg.symmetric_classes)?;

    let t = Instant::now();
    let board = score_dataset(&records, &truths, &models, &eval_cfg)?;
    let sweep = if args.sweep {
        Some(recall_sweep(&records, &truths, &models, &eval_cfg)?)
    } else {
        None
    };
    let eval_ms = elapsed_ms(t);

    create_dir(&args.out)?;
    let mut report = RunReport::new("eval", cfg, &args.out)?;
    let table = board.to_table();
    println!("{table}");
    write_atomic(&args.out.join("scoreboard.txt"), table.as_bytes())?;
    crate::io::write_json(&args.out.join("scoreboard.json"), &board)?;
    report.record("scoreboard.txt")?;
    report.record("scoreboard.json")?;
    if let Some(sweep) = &sweep {
        let mut csv = String::from("threshold,recall\n");
        for (f, r) in sweep {
            let _ = writeln!(csv, "{f},{r}");
        }
        print!("{csv}");
        write_atomic(&args.out.join("sweep.csv"), csv.as_bytes())?;
        report.record("sweep.csv")?;
    }
    report.time("evaluation", eval_ms);
    report.count("scenes", truths.len());
    report.count("instances", truths.iter().map(|t| t.instances.len()).sum());
    report.count("estimates", records.iter().map(|r| r.estimates.len()).sum());
    report.metric("mean_recall", board.mean_recall);
    report.metric("mean_precision", board.mean_precision);
    report.metric("mean_f1", board.mean_f1);
    Ok(report)
}

pub fn cmd_export_viz(cfg: &RunConfig, args: &ExportVizArgs) -> Result<RunReport, CliError> {
    args.predictor.check()?;
    let ds = Dataset::open(&args.dataset)?;
    let source = Source::load(&args.predictor, &ds, cfg)?;
    let templates = build_templates(&ds.models)?;
    let index = scene_indices(&ds, &[args.scene])?[0];
    let scene = ds.load_scene(index)?;
    let inference = infer_scene(
        &scene,
        source.predictor(args.scene),
        &templates,
        &infer_config(cfg, &args.predictor),
    )?;
    let estimates = match &args.poses {
        Some(path) => {
            read_pose_records(path)?
                .into_iter()
                .find(|r| r.scene_id == args.scene)
                .ok_or_else(|| Error::Data(format!("{} has no record for scene {}", path.display(), args.scene)))?
                .estimates
        }
        None => inference.report.estimates.clone(),
    };

    let colors = class_colors(&ds);
    let color = |c: u32| colors.get(&c).copied().unwrap_or([1.0, 1.0, 1.0]);
    let boxes = estimate_boxes(&estimates, |c| templates.get(&c).map(|t| t.control_points), color);
    if boxes.len() != estimates.len() {
        return Err(Error::Data(format!(
            "scene {} estimates use classes missing from the dataset",
            args.scene
        ))
        .into());
    }

    create_dir(&args.out)?;
    let mut report = RunReport::new("export-viz", cfg, &args.out)?;
    let stem = scene_file_stem(args.scene);
    let kps = &inference.sample.keypoint_positions;
    let files = [
        (
            format!("{stem}_seg.ply"),
            crate::io::encode_cloud(
                &segmentation_cloud(kps, &inference.prediction, color),
                PlyFormat::BinaryLittleEndian,
            )?,
        ),
        (
            format!("{stem}_conf.ply"),
            crate::io::encode_cloud(
                &confidence_cloud(kps, &inference.prediction),
                PlyFormat::BinaryLittleEndian,
            )?,
        ),
        (
            format!("{stem}_boxes.ply"),
            encode_ply(&box_line_set_ply(&boxes, PlyFormat::Ascii))?,
        ),
        (format!("{stem}_boxes.obj"), box_line_set_obj(&boxes).into_bytes()),
    ];
    for (rel, bytes) in &files {
        write_atomic(&args.out.join(rel), bytes)?;
        report.record(rel)?;
    }
    report.time("sampling_grouping", inference.timing.sampling_ms);
    report.time("prediction", inference.timing.prediction_ms);
    report.time("decoding", inference.timing.decoding_ms);
    report.count("keypoints", kps.len());
    report.count("estimates", estimates.len());
    report.count("box_edges", 12 * boxes.len());
    Ok(report)
}
