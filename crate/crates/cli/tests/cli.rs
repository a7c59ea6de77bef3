use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cervifuse::pipeline::{file_hash, run_all, Run, Stage, StageRecord};
use cervifuse::{synth, CliError, ExperimentConfig};
use cervifuse_core::backbone::{Backbone, BackboneSpec};
use cervifuse_core::nn::{
    adam_step, softmax, softmax_ce_grad, Activation, AdamConfig, AdamState, DenseParams, Layer, Mode, Network,
};
use cervifuse_core::rng::rng_for;

const BIN: &str = env!("CARGO_BIN_EXE_cervifuse");

/// Short schedules keep the stage tests quick; the full schedule runs in
/// the acceptance target.
const FAST: &str = r#"
[head]
phases = [{ epochs = 4, lr = 1e-3 }]
batch_size = 32
dropout = 0.5

[fusion]
phases = [{ epochs = 4, lr = 1e-3 }]
batch_size = 32
dropout = 0.5
"#;

fn experiment(dir: &Path, n_per_class: usize) -> PathBuf {
    synth::generate(&dir.join("data"), n_per_class, 3, 0).unwrap();
    let cfg = format!(
        r#"seed = 1
dataset_root = "data"
scheme = "synthetic-3"
out_dir = "runs"

[augment]
copies = 1

[[backbones]]
id = "toy_a"
kind = "toy"
seed = 11
input_size = 32

[[backbones]]
id = "toy_b"
kind = "toy"
seed = 22
input_size = 32
{FAST}"#
    );
    let path = dir.join("exp.toml");
    std::fs::write(&path, cfg).unwrap();
    path
}

fn cli(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_writes_one_directory_per_class() {
    let dir = tempfile::tempdir().unwrap();
    let files = synth::generate(dir.path(), 30, 5, 4).unwrap();
    assert_eq!(files.len(), 150);
    let mut classes: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    classes.sort();
    assert_eq!(classes, ["class_0", "class_1", "class_2", "class_3", "class_4"]);
    for c in &classes {
        assert_eq!(std::fs::read_dir(dir.path().join(c)).unwrap().count(), 30);
    }
}

#[test]
fn synth_is_byte_identical_for_a_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = synth::generate(a.path(), 4, 3, 9).unwrap();
    let fb = synth::generate(b.path(), 4, 3, 9).unwrap();
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let c = tempfile::tempdir().unwrap();
    let fc = synth::generate(c.path(), 4, 3, 10).unwrap();
    assert_ne!(std::fs::read(&fa[0]).unwrap(), std::fs::read(&fc[0]).unwrap());
}

#[test]
fn synth_rejects_bad_class_counts() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(synth::generate(dir.path(), 2, 1, 0), Err(CliError::Validation(_))));
    assert!(matches!(synth::generate(dir.path(), 2, 8, 0), Err(CliError::Validation(_))));
}

/// A single softmax layer trained on raw toy-trunk features must separate
/// the synthetic classes, otherwise the dataset is too hard to tell a
/// working pipeline from a broken one.
#[test]
fn toy_features_are_linearly_separable() {
    let classes = 5;
    let per_class = 30;
    let spec = BackboneSpec::toy("probe", 11, 64);
    let trunk = Backbone::load(&spec).unwrap();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for k in 0..classes {
        for i in 0..per_class {
            images.push(synth::synth_image(k, i, 0));
            labels.push(k);
        }
    }
    let feats = trunk.embed(&images).unwrap();
    let (n, d) = feats.dims2().unwrap();
    let mut mean = vec![0.0f64; d];
    let mut sq = vec![0.0f64; d];
    for i in 0..n {
        for (j, &v) in feats.row(i).iter().enumerate() {
            mean[j] += v as f64 / n as f64;
            sq[j] += (v as f64).powi(2) / n as f64;
        }
    }
    let std: Vec<f64> = mean.iter().zip(&sq).map(|(m, s)| (s - m * m).max(0.0).sqrt().max(1e-6)).collect();
    let mut x = feats.clone();
    for i in 0..n {
        for (j, v) in x.row_mut(i).iter_mut().enumerate() {
            *v = ((*v as f64 - mean[j]) / std[j]) as f32;
        }
    }

    let mut rng = rng_for(3, &[]);
    let mut net: Network<f32> =
        Network::new(vec![Layer::Dense(DenseParams::glorot(d, classes, Activation::None, &mut rng).unwrap())]).unwrap();
    let shapes = net.param_shapes();
    let shapes: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
    let mut adam = AdamState::new(&shapes, AdamConfig::with_lr(1e-2)).unwrap();
    for step in 0..300 {
        let logits = net.forward(&x, Mode::Train, step).unwrap();
        let probs = softmax(&logits).unwrap();
        let grads = net.backward(&softmax_ce_grad(&probs, &labels).unwrap()).unwrap();
        adam_step(&mut net.params_mut(), &grads, &mut adam).unwrap();
    }
    let probs = softmax(&net.predict(&x).unwrap()).unwrap();
    let correct = (0..n)
        .filter(|&i| {
            let row = probs.row(i);
            let best = (0..classes).fold(0, |b, c| if row[c] > row[b] { c } else { b });
            best == labels[i]
        })
        .count();
    let acc = correct as f64 / n as f64;
    assert!(acc >= 0.99, "linear probe train accuracy {acc}");
}

#[test]
fn stage_before_its_inputs_names_the_missing_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment(dir.path(), 6);
    let out = cli(&["train-fusion", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("features missing; run extract"), "{}", stderr(&out));
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::create_dir(dir.path().join("data")).unwrap();
    std::fs::write(
        &cfg,
        "seed = 1\ndataset_root = \"data\"\nscheme = \"synthetic-3\"\n[[backbones]]\nid = \"t\"\nkind = \"toy\"\n",
    )
    .unwrap();
    let out = cli(&["split", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("backbones[0].seed"), "{}", stderr(&out));

    std::fs::write(&cfg, "dataset_root = \"data\"\nscheme = \"synthetic-3\"\n").unwrap();
    let out = cli(&["split", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("seed"), "{}", stderr(&out));
}

#[test]
fn stages_chain_through_the_binary_and_eval_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment(dir.path(), 8);
    let c = cfg.to_str().unwrap();
    for stage in ["split", "augment", "extract", "train-head", "train-fusion", "predict-lf", "eval"] {
        let out = cli(&[stage, "--config", c]);
        assert!(out.status.success(), "{stage}: {}", stderr(&out));
    }
    let run_dir = ExperimentConfig::load(&cfg).unwrap().run_dir();
    let metrics = run_dir.join("reports/metrics.json");
    let first = std::fs::read(&metrics).unwrap();
    let out = cli(&["eval", "--config", c]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(first, std::fs::read(&metrics).unwrap());

    let out = cli(&["report", "--config", c]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = String::from_utf8(out.stdout).unwrap();
    for name in ["toy_a", "toy_b", "lf", "hdff"] {
        assert!(table.contains(name), "{table}");
    }
    for f in ["comparison.csv", "comparison.txt", "accuracy.png", "confusion_hdff.png"] {
        assert!(run_dir.join("reports").join(f).is_file(), "{f}");
    }
    assert!(!run_dir.join(".lock").exists());
}

#[test]
fn seed_override_gives_a_separate_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment(dir.path(), 6);
    let c = cfg.to_str().unwrap();
    assert!(cli(&["split", "--config", c]).status.success());
    assert!(cli(&["split", "--config", c, "--seed", "2"]).status.success());
    let runs = std::fs::read_dir(dir.path().join("runs")).unwrap().count();
    assert_eq!(runs, 2);
}

fn stage_record(run: &Run, stage: Stage) -> (PathBuf, StageRecord) {
    let p = run.dir.join(format!("stages/{}.json", stage.name()));
    let rec = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
    (p, rec)
}

#[test]
fn artifacts_from_another_config_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::load(&experiment(dir.path(), 6)).unwrap();
    let run = Run::open(cfg).unwrap();
    run.execute(Stage::Split).unwrap();
    let (p, mut rec) = stage_record(&run, Stage::Split);
    rec.config_hash = "0".repeat(64);
    std::fs::write(&p, serde_json::to_vec(&rec).unwrap()).unwrap();
    match run.execute(Stage::Augment) {
        Err(CliError::Validation(msg)) => assert!(msg.contains("refusing to mix"), "{msg}"),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn tampered_outputs_are_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::load(&experiment(dir.path(), 6)).unwrap();
    let run = Run::open(cfg).unwrap();
    run.execute(Stage::Split).unwrap();
    let manifest = run.dir.join("manifest.csv");
    let before = file_hash(&manifest).unwrap();
    let mut text = std::fs::read(&manifest).unwrap();
    text.push(b'\n');
    std::fs::write(&manifest, text).unwrap();
    assert_ne!(before, file_hash(&manifest).unwrap());
    assert!(matches!(run.execute(Stage::Augment), Err(CliError::Validation(_))));
}

#[test]
fn a_held_lock_blocks_a_second_command() {
    let dir = tempfile::tempdir().unwrap();
    let path = experiment(dir.path(), 6);
    let run = Run::open(ExperimentConfig::load(&path).unwrap()).unwrap();
    assert!(matches!(Run::open(ExperimentConfig::load(&path).unwrap()), Err(CliError::Io(_))));
    let out = cli(&["split", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    drop(run);
    assert!(Run::open(ExperimentConfig::load(&path).unwrap()).is_ok());
}

#[test]
fn stage_records_hash_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::load(&experiment(dir.path(), 6)).unwrap();
    let run = run_all(cfg).unwrap();
    for stage in Stage::ALL {
        let (_, rec) = stage_record(&run, stage);
        assert_eq!(rec.command, stage.name());
        assert_eq!(rec.config_hash, run.hash);
        assert!(!rec.outputs.is_empty(), "{}", stage.name());
        for (rel, digest) in &rec.outputs {
            assert_eq!(&file_hash(&run.dir.join(rel)).unwrap(), digest, "{rel}");
        }
    }
    let (_, extract) = stage_record(&run, Stage::Extract);
    let (_, fusion) = stage_record(&run, Stage::TrainFusion);
    assert_eq!(extract.trunk_checksums.len(), 2);
    assert_eq!(extract.trunk_checksums, fusion.trunk_checksums);
}

#[cfg(feature = "onnx")]
#[test]
fn interchange_trunk_runs_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
    for f in ["tiny_trunk.onnx", "tiny_trunk.manifest.json"] {
        std::fs::copy(fixtures.join(f), dir.path().join(f)).unwrap();
    }
    synth::generate(&dir.path().join("data"), 6, 3, 0).unwrap();
    let text = format!(
        r#"seed = 3
dataset_root = "data"
scheme = "synthetic-3"

[augment]
copies = 0

[[backbones]]
id = "tiny"
kind = "interchange"
path = "tiny_trunk.onnx"

[[backbones]]
id = "toy"
kind = "toy"
seed = 5
input_size = 16
{FAST}"#
    );
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, text).unwrap();
    let run = run_all(ExperimentConfig::load(&path).unwrap()).unwrap();
    assert!(run.metrics_path().is_file());
    let (_, rec) = stage_record(&run, Stage::Extract);
    assert!(rec.trunk_checksums.contains_key("tiny"));
}
