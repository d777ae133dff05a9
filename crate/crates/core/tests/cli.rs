//! End-to-end runs of the command-line front end.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pointpose::cli::run;
use pointpose::io::{read_pose_records, Dataset};
use pointpose::predictor::{Checkpoint, EncoderParams, NetworkShape};
use tempfile::TempDir;

const CONFIG: &str = "[keypoints]\nkeypoints = 128\n[train]\nepochs = 2\nlearning_rate = 0.01\n";

struct Workspace {
    dir: TempDir,
    config: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("run.toml");
        std::fs::write(&config, CONFIG).unwrap();
        Self { dir, config }
    }

    fn path(&self, rel: &str) -> String {
        self.dir.path().join(rel).to_string_lossy().into_owned()
    }

    fn run(&self, args: &[&str]) -> i32 {
        let cfg = self.config.to_string_lossy().into_owned();
        let mut full = vec!["pointpose", "--seed", "11", "--config", cfg.as_str()];
        full.extend_from_slice(args);
        run(full)
    }

    fn generate(&self, scenes: &str, objects: &str) {
        let out = self.path("data");
        assert_eq!(
            self.run(&["generate", "--out", &out, "--scenes", scenes, "--objects", objects]),
            0
        );
    }
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walkdir(root)
        .into_iter()
        .map(|p| (p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()))
        .collect()
}

fn walkdir(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walkdir(&path));
        } else {
            out.push(path);
        }
    }
    out
}

fn loss_column(csv: &str) -> Vec<f64> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn usage_errors_exit_one() {
    let ws = Workspace::new();
    ws.generate("1", "can");
    let data = ws.path("data");
    let out = ws.path("o");
    assert_eq!(ws.run(&["frobnicate"]), 1);
    assert_eq!(ws.run(&["infer", "--dataset", &data, "--out", &out]), 1);
    assert_eq!(
        ws.run(&[
            "infer",
            "--dataset",
            &data,
            "--out",
            &out,
            "--checkpoint",
            "x",
            "--oracle"
        ]),
        1
    );
    assert_eq!(
        ws.run(&[
            "infer",
            "--dataset",
            &data,
            "--out",
            &out,
            "--checkpoint",
            "x",
            "--noise",
            "0.1"
        ]),
        1
    );
    assert_eq!(
        ws.run(&[
            "infer",
            "--dataset",
            &data,
            "--out",
            &out,
            "--oracle",
            "--noise",
            "-0.1"
        ]),
        1
    );
    assert_eq!(
        ws.run(&["--jobs", "0", "infer", "--dataset", &data, "--out", &out, "--oracle"]),
        1
    );
    assert!(!Path::new(&out).exists());
}

#[test]
fn data_errors_exit_two() {
    let ws = Workspace::new();
    ws.generate("1", "can");
    let data = ws.path("data");
    assert_eq!(
        ws.run(&[
            "infer",
            "--dataset",
            &ws.path("missing"),
            "--out",
            &ws.path("o"),
            "--oracle"
        ]),
        2
    );
    assert_eq!(
        ws.run(&[
            "infer",
            "--dataset",
            &data,
            "--out",
            &ws.path("o"),
            "--oracle",
            "--scenes",
            "7"
        ]),
        2
    );
    assert_eq!(
        ws.run(&[
            "generate",
            "--out",
            &ws.path("bad"),
            "--scenes",
            "1",
            "--objects",
            "nope.ply"
        ]),
        2
    );
    assert!(!Path::new(&ws.path("bad")).exists());
}

#[test]
fn oracle_without_noise_or_refinement_is_exact() {
    let ws = Workspace::new();
    ws.generate("2", "box,bracket");
    let data = ws.path("data");
    let out = ws.path("oracle");
    assert_eq!(
        ws.run(&[
            "infer",
            "--dataset",
            &data,
            "--out",
            &out,
            "--oracle",
            "--noise",
            "0",
            "--no-refine"
        ]),
        0
    );
    let ds = Dataset::open(Path::new(&data)).unwrap();
    let models = ds.eval_models(&[]).unwrap();
    let records = read_pose_records(&Path::new(&out).join("poses.jsonl")).unwrap();
    assert_eq!(records.len(), 2);
    for rec in &records {
        let truth = ds.scene_truth(rec.scene_id).unwrap();
        for inst in &truth.instances {
            let model = &models[&inst.class_id];
            let best = rec
                .estimates
                .iter()
                .filter(|e| e.class_id == inst.class_id)
                .map(|e| model.pose_error(&inst.pose, &e.pose))
                .fold(f64::INFINITY, f64::min);
            assert!(
                best < 1e-6 * model.diameter,
                "scene {} class {}: {best}",
                rec.scene_id,
                inst.class_id
            );
        }
    }
}

#[test]
fn training_zero_epochs_keeps_initial_weights() {
    let ws = Workspace::new();
    ws.generate("1", "can,bracket");
    let out = ws.path("train");
    let args = [
        "train",
        "--dataset",
        &ws.path("data"),
        "--out",
        &out,
        "--epochs",
        "0",
        "--pretrain-epochs",
        "0",
    ];
    assert_eq!(ws.run(&args), 0);
    let saved = Checkpoint::load(&Path::new(&out).join("model.ckpt")).unwrap();
    let shape = NetworkShape {
        classes: 3,
        ..NetworkShape::default()
    };
    let init = EncoderParams::init(shape, 11).unwrap();
    assert_eq!(
        Checkpoint::new(saved.params).to_bytes(),
        Checkpoint::new(init).to_bytes()
    );
}

#[test]
fn resume_matches_an_uninterrupted_run() {
    let ws = Workspace::new();
    ws.generate("1", "can");
    let data = ws.path("data");
    let (full, part, resumed) = (ws.path("full"), ws.path("part"), ws.path("resumed"));
    assert_eq!(
        ws.run(&["train", "--dataset", &data, "--out", &full, "--epochs", "3"]),
        0
    );
    assert_eq!(
        ws.run(&["train", "--dataset", &data, "--out", &part, "--epochs", "1"]),
        0
    );
    let ckpt = format!("{part}/model.ckpt");
    assert_eq!(
        ws.run(&[
            "train",
            "--dataset",
            &data,
            "--out",
            &resumed,
            "--epochs",
            "3",
            "--resume",
            &ckpt
        ]),
        0
    );
    let a = std::fs::read(format!("{full}/model.ckpt")).unwrap();
    let b = std::fs::read(format!("{resumed}/model.ckpt")).unwrap();
    assert!(a == b, "resumed checkpoint differs");
}

#[test]
fn smoke_training_halves_the_loss() {
    let ws = Workspace::new();
    ws.generate("1", "box");
    let out = ws.path("train");
    assert_eq!(
        ws.run(&["train", "--dataset", &ws.path("data"), "--out", &out, "--epochs", "60"]),
        0
    );
    let losses = loss_column(&std::fs::read_to_string(format!("{out}/loss.csv")).unwrap());
    let (first, last) = (losses[0], *losses.last().unwrap());
    assert!(last <= 0.5 * first, "loss {first} -> {last}");
}

#[test]
fn eval_sweep_is_monotone_and_checks_scene_ids() {
    let ws = Workspace::new();
    ws.generate("2", "can");
    let data = ws.path("data");
    let infer = ws.path("infer");
    assert_eq!(
        ws.run(&[
            "infer",
            "--dataset",
            &data,
            "--out",
            &infer,
            "--oracle",
            "--noise",
            "0.002",
            "--dump-seg"
        ]),
        0
    );
    assert!(Path::new(&infer).join("seg/scene_000000.ply").exists());
    let poses = format!("{infer}/poses.jsonl");
    let before = snapshot(Path::new(&data));
    let eval = ws.path("eval");
    assert_eq!(
        ws.run(&["eval", "--poses", &poses, "--dataset", &data, "--out", &eval, "--sweep"]),
        0
    );
    assert_eq!(snapshot(Path::new(&data)), before);
    let sweep = std::fs::read_to_string(format!("{eval}/sweep.csv")).unwrap();
    let recall: Vec<f64> = sweep
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(recall.len(), 10);
    assert!(recall.windows(2).all(|w| w[0] <= w[1]), "{recall:?}");

    let other = Workspace::new();
    other.generate("1", "can");
    assert_eq!(
        other.run(&[
            "eval",
            "--poses",
            &poses,
            "--dataset",
            &other.path("data"),
            "--out",
            &other.path("e")
        ]),
        2
    );
    assert_eq!(
        ws.run(&[
            "eval",
            "--poses",
            &poses,
            "--dataset",
            &data,
            "--out",
            &eval,
            "--threshold",
            "-1"
        ]),
        1
    );
}

#[test]
fn export_viz_writes_box_edges() {
    let ws = Workspace::new();
    ws.generate("1", "bracket");
    let out = ws.path("viz");
    assert_eq!(
        ws.run(&[
            "export-viz",
            "--dataset",
            &ws.path("data"),
            "--scene",
            "0",
            "--out",
            &out,
            "--oracle"
        ]),
        0
    );
    for suffix in ["seg.ply", "conf.ply", "boxes.ply", "boxes.obj"] {
        assert!(
            Path::new(&out).join(format!("scene_000000_{suffix}")).exists(),
            "{suffix}"
        );
    }
    let obj = std::fs::read_to_string(format!("{out}/scene_000000_boxes.obj")).unwrap();
    let boxes = obj.lines().filter(|l| l.starts_with("o ")).count();
    let edges = obj.lines().filter(|l| l.starts_with("l ")).count();
    assert!(boxes >= 1);
    assert_eq!(edges, 12 * boxes);
}
