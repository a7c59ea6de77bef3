//! Pipeline stages. Each stage reads its upstream artifacts from the run
//! directory, writes its own, and records a stage manifest
//! (`stages/<command>.json`) with the config hash, the seed, and SHA-256
//! digests of what it read and wrote.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use cervifuse_core::augment::{generate_offline, load_rgb, online_augment, AugPipeline, OnlineAugConfig};
use cervifuse_core::backbone::Backbone;
use cervifuse_core::dataset::{ingest, load_manifest, save_manifest, stratified_split, Manifest, Split};
use cervifuse_core::eval::{
    compare_report, confusion, metrics, render_accuracy_chart, render_confusion_heatmap, ConfusionMatrix,
    MetricsReport,
};
use cervifuse_core::fusion::{
    concat_features, extract_features, load_head, predict, save_fusion, save_head, train_fusion,
    train_head, train_head_with, FeatureMatrix, FusionModel, HeadModel, Normalization, Prediction, PredictionSet,
    TrainHistory, FEATURE_DIM,
};
use cervifuse_core::rng::derive_seed;
use cervifuse_core::Tensor;
use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig};
use crate::error::{CliError, CliResult};

/// Images embedded per trunk call.
const EMBED_CHUNK: usize = 64;

const SEED_AUGMENT: u64 = 1;
const SEED_HEAD: u64 = 2;
const SEED_FUSION: u64 = 3;
const SEED_ONLINE: u64 = 4;

pub const EVAL_SPLIT: Split = Split::Test;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Split,
    Augment,
    Extract,
    TrainHead,
    TrainFusion,
    PredictLf,
    Eval,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Split,
        Stage::Augment,
        Stage::Extract,
        Stage::TrainHead,
        Stage::TrainFusion,
        Stage::PredictLf,
        Stage::Eval,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Split => "split",
            Stage::Augment => "augment",
            Stage::Extract => "extract",
            Stage::TrainHead => "train-head",
            Stage::TrainFusion => "train-fusion",
            Stage::PredictLf => "predict-lf",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }

    fn missing(self) -> String {
        let what = match self {
            Stage::Split => "split manifest",
            Stage::Augment => "augmented manifest",
            Stage::Extract => "features",
            Stage::TrainHead => "head models",
            Stage::TrainFusion => "fusion model",
            Stage::PredictLf => "late-fusion predictions",
            Stage::Eval => "metrics",
            Stage::Report => "report",
        };
        format!("{what} missing; run {}", self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub trunk_checksums: BTreeMap<String, String>,
}

/// Holds `.lock` in the run directory for the lifetime of a command.
struct Lock(PathBuf);

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

/// An open run directory bound to one configuration.
pub struct Run {
    pub cfg: ExperimentConfig,
    pub dir: PathBuf,
    pub hash: String,
    _lock: Lock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub name: String,
    pub sample_ids: Vec<usize>,
    pub truth: Vec<usize>,
    pub labels: Vec<usize>,
    pub probs: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub name: String,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub config_hash: String,
    pub seed: u64,
    pub scheme: String,
    pub split: Split,
    pub runs: Vec<RunMetrics>,
}

#[derive(Serialize)]
struct HistoryFile<'a> {
    config_hash: &'a str,
    seed: u64,
    history: &'a TrainHistory,
    val_accuracy: f64,
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(parent) => std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e)),
        None => Ok(()),
    }
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    ensure_parent(path)?;
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.into()))?;
    bytes.push(b'\n');
    write(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Runtime(e.into()))
}

pub fn file_hash(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex(&Sha256::digest(bytes)))
}

impl Run {
    /// Creates the run directory if needed, takes the lock, and stores the
    /// effective configuration as `config.toml`.
    pub fn open(cfg: ExperimentConfig) -> CliResult<Self> {
        let hash = cfg.hash();
        let dir = cfg.run_dir();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let lock_path = dir.join(".lock");
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
            .map_err(|e| {
                CliError::Io(format!(
                    "cannot lock {}: {e} (another command may be running; remove the file if not)",
                    lock_path.display()
                ))
            })?;
        let lock = Lock(lock_path);
        let text = toml::to_string(&cfg).map_err(|e| CliError::Io(format!("config serialization: {e}")))?;
        write(&dir.join("config.toml"), text.as_bytes())?;
        Ok(Self {
            cfg,
            dir,
            hash,
            _lock: lock,
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.dir)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn stage_path(&self, stage: Stage) -> PathBuf {
        self.path(&format!("stages/{}.json", stage.name()))
    }

    /// Loads an upstream stage record, checking that it belongs to this
    /// configuration and that its outputs are unchanged.
    pub fn require(&self, stage: Stage) -> CliResult<StageRecord> {
        let path = self.stage_path(stage);
        if !path.is_file() {
            return Err(CliError::Validation(stage.missing()));
        }
        let rec: StageRecord = read_json(&path)?;
        if rec.config_hash != self.hash {
            return Err(CliError::Validation(format!(
                "{} was produced under config hash {}, current config is {}; refusing to mix artifacts (rerun {})",
                self.rel(&path),
                rec.config_hash,
                self.hash,
                stage.name()
            )));
        }
        for (rel, digest) in &rec.outputs {
            let p = self.path(rel);
            if !p.is_file() || &file_hash(&p)? != digest {
                return Err(CliError::Validation(format!(
                    "{rel} is missing or changed since {} ran; rerun {}",
                    stage.name(),
                    stage.name()
                )));
            }
        }
        Ok(rec)
    }

    fn record(
        &self,
        stage: Stage,
        inputs: BTreeMap<String, String>,
        outputs: &[PathBuf],
        trunk_checksums: BTreeMap<String, String>,
    ) -> CliResult<()> {
        let outputs = outputs
            .iter()
            .map(|p| Ok((self.rel(p), file_hash(p)?)))
            .collect::<CliResult<_>>()?;
        let rec = StageRecord {
            command: stage.name().to_string(),
            config_hash: self.hash.clone(),
            seed: self.cfg.seed,
            inputs,
            outputs,
            trunk_checksums,
        };
        write_json(&self.stage_path(stage), &rec)
    }

    fn inputs_from(&self, recs: &[&StageRecord]) -> BTreeMap<String, String> {
        recs.iter()
            .flat_map(|r| r.outputs.iter().map(|(k, v)| (k.clone(), v.clone())))
            .collect()
    }

    fn ids(&self) -> Vec<String> {
        self.cfg.backbones.iter().map(|b| b.id.clone()).collect()
    }

    pub fn trunk_path(&self, id: &str, split: Split) -> PathBuf {
        self.path(&format!("trunk/{id}.{split}.fmx"))
    }

    pub fn feature_path(&self, id: &str, split: Split) -> PathBuf {
        self.path(&format!("features/{id}.{split}.fmx"))
    }

    pub fn head_path(&self, id: &str) -> PathBuf {
        self.path(&format!("models/head_{id}.cfck"))
    }

    pub fn prediction_path(&self, name: &str) -> PathBuf {
        self.path(&format!("predictions/{name}.json"))
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.path("reports/metrics.json")
    }

    fn uses_fusion(&self) -> bool {
        self.cfg.backbones.len() >= 2
    }

    pub fn execute(&self, stage: Stage) -> CliResult<()> {
        log::info!("{} ({})", stage.name(), self.dir.display());
        match stage {
            Stage::Split => self.split(),
            Stage::Augment => self.augment(),
            Stage::Extract => self.extract(),
            Stage::TrainHead => self.train_heads(),
            Stage::TrainFusion => self.train_fusion(),
            Stage::PredictLf => self.predict_lf(),
            Stage::Eval => self.eval(),
            Stage::Report => self.report().map(|_| ()),
        }
    }

    fn split(&self) -> CliResult<()> {
        let scheme = self.cfg.scheme()?;
        let manifest = ingest(&self.cfg.dataset_root, &scheme)?;
        let mut digest = Sha256::new();
        for r in &manifest.rows {
            digest.update(r.path.as_bytes());
            digest.update(file_hash(Path::new(&r.path))?.as_bytes());
        }
        let split = stratified_split(&manifest, self.cfg.fractions(), self.cfg.seed)?;
        let out = self.path("manifest.csv");
        save_manifest(&split, &out)?;
        let inputs = BTreeMap::from([("dataset".to_string(), hex(&digest.finalize()))]);
        log::info!(
            "{} rows: train {}, val {}, test {}",
            split.rows.len(),
            split.count(Split::Train),
            split.count(Split::Val),
            split.count(Split::Test)
        );
        self.record(Stage::Split, inputs, &[out.clone(), sidecar(&out)], BTreeMap::new())
    }

    fn augment(&self) -> CliResult<()> {
        let up = self.require(Stage::Split)?;
        let manifest = load_manifest(&self.path("manifest.csv"))?;
        let out_dir = self.path("augmented");
        if out_dir.exists() {
            std::fs::remove_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
        }
        let copies = self.cfg.augment.copies;
        let expanded = if copies == 0 {
            manifest
        } else {
            let pipeline = AugPipeline::standard(copies, derive_seed(self.cfg.seed, &[SEED_AUGMENT]));
            generate_offline(&manifest, &pipeline, &out_dir)?
        };
        let out = self.path("manifest_aug.csv");
        save_manifest(&expanded, &out)?;
        log::info!("training rows after augmentation: {}", expanded.count(Split::Train));
        self.record(
            Stage::Augment,
            self.inputs_from(&[&up]),
            &[out.clone(), sidecar(&out)],
            BTreeMap::new(),
        )
    }

    fn manifest(&self) -> CliResult<Manifest> {
        Ok(load_manifest(&self.path("manifest_aug.csv"))?)
    }

    fn extract(&self) -> CliResult<()> {
        let up = self.require(Stage::Augment)?;
        let manifest = self.manifest()?;
        let label_list = manifest.scheme.classes.clone();
        let mut outputs = Vec::new();
        let mut checksums = BTreeMap::new();
        for b in &self.cfg.backbones {
            let backbone = Backbone::load(&self.cfg.backbone_spec(b)?)?;
            checksums.insert(b.id.clone(), backbone.checksum());
            for split in [Split::Train, Split::Val, Split::Test] {
                let (ids, labels, paths) = split_rows(&manifest, split);
                let images = paths.iter().map(|p| load_rgb(Path::new(p))).collect::<Result<Vec<_>, _>>()?;
                let rows = embed(&backbone, &images)?;
                let d = rows.shape()[1];
                let fm = FeatureMatrix::new(
                    &b.id,
                    split,
                    rows,
                    labels,
                    ids,
                    label_list.clone(),
                    Normalization {
                        mean: vec![0.0; d],
                        std: vec![1.0; d],
                    },
                )?;
                let path = self.trunk_path(&b.id, split);
                ensure_parent(&path)?;
                fm.save(&path)?;
                outputs.push(sidecar(&path));
                outputs.push(path);
            }
            log::info!("extracted trunk features for {}", b.id);
        }
        self.record(Stage::Extract, self.inputs_from(&[&up]), &outputs, checksums)
    }

    /// Trunk checksums now must equal the ones recorded at extraction.
    fn check_frozen(&self, extract: &StageRecord) -> CliResult<BTreeMap<String, String>> {
        let mut now = BTreeMap::new();
        for b in &self.cfg.backbones {
            let sum = Backbone::load(&self.cfg.backbone_spec(b)?)?.checksum();
            if extract.trunk_checksums.get(&b.id) != Some(&sum) {
                return Err(CliError::Validation(format!(
                    "trunk {} differs from the one used by extract; rerun extract",
                    b.id
                )));
            }
            now.insert(b.id.clone(), sum);
        }
        Ok(now)
    }

    fn train_heads(&self) -> CliResult<()> {
        let up = self.require(Stage::Extract)?;
        let classes = self.cfg.scheme()?.class_count();
        let mut outputs = Vec::new();
        for (k, b) in self.cfg.backbones.iter().enumerate() {
            let train = FeatureMatrix::load(&self.trunk_path(&b.id, Split::Train))?;
            let val = FeatureMatrix::load(&self.trunk_path(&b.id, Split::Val))?;
            let seed = derive_seed(self.cfg.seed, &[SEED_HEAD, k as u64]);
            let mut head = HeadModel::new(&b.id, train.width(), classes, self.cfg.head.dropout, seed)?;
            let schedule = self.cfg.head.schedule();
            let history = if self.cfg.augment.online {
                let manifest = self.manifest()?;
                let (ids, _, paths) = split_rows(&manifest, Split::Train);
                if ids != train.sample_ids {
                    return Err(CliError::Validation(
                        "trunk features do not match the augmented manifest; rerun extract".into(),
                    ));
                }
                let images = paths.iter().map(|p| load_rgb(Path::new(p))).collect::<Result<Vec<_>, _>>()?;
                let backbone = Backbone::load(&self.cfg.backbone_spec(b)?)?;
                let online = OnlineAugConfig::default();
                let online_seed = derive_seed(self.cfg.seed, &[SEED_ONLINE, k as u64]);
                train_head_with(
                    &mut head,
                    &mut |epoch| {
                        let batch = online_augment(&images, &ids, &online, derive_seed(online_seed, &[epoch as u64]))?;
                        embed(&backbone, &batch)
                    },
                    &train.labels,
                    &schedule,
                    seed,
                )?
            } else {
                train_head(&mut head, &train.rows, &train.labels, &schedule, seed)?
            };
            let val_pred = predict(&head, &val.rows)?;
            let val_accuracy = accuracy(&val_pred.labels, &val.labels);
            log::info!(
                "head {}: final loss {:.4}, val accuracy {:.4}",
                b.id,
                history.final_loss().unwrap_or(f64::NAN),
                val_accuracy
            );
            let model_path = self.head_path(&b.id);
            ensure_parent(&model_path)?;
            save_head(&head, &model_path)?;
            let hist_path = self.path(&format!("models/head_{}.history.json", b.id));
            write_json(
                &hist_path,
                &HistoryFile {
                    config_hash: &self.hash,
                    seed: self.cfg.seed,
                    history: &history,
                    val_accuracy,
                },
            )?;
            outputs.extend([model_path.clone(), sidecar(&model_path), hist_path]);

            let norm = Normalization::fit(&head.activations(&train.rows)?)?;
            for split in [Split::Train, Split::Val, Split::Test] {
                let trunk = if split == Split::Train {
                    train.clone()
                } else {
                    FeatureMatrix::load(&self.trunk_path(&b.id, split))?
                };
                let fm = extract_features(
                    &head,
                    &trunk.rows,
                    split,
                    trunk.labels,
                    trunk.sample_ids,
                    trunk.label_list,
                    &norm,
                )?;
                let path = self.feature_path(&b.id, split);
                ensure_parent(&path)?;
                fm.save(&path)?;
                outputs.push(sidecar(&path));
                outputs.push(path);
            }
        }
        let checksums = self.check_frozen(&up)?;
        self.record(Stage::TrainHead, self.inputs_from(&[&up]), &outputs, checksums)
    }

    fn load_features(&self, split: Split) -> CliResult<Vec<FeatureMatrix>> {
        self.ids()
            .iter()
            .map(|id| Ok(FeatureMatrix::load(&self.feature_path(id, split))?))
            .collect()
    }

    fn train_fusion(&self) -> CliResult<()> {
        let extract = self.require(Stage::Extract)?;
        let heads = self.require(Stage::TrainHead)?;
        if !self.uses_fusion() {
            return Err(CliError::Validation(
                "config backbones: fusion needs at least two backbones".into(),
            ));
        }
        let classes = self.cfg.scheme()?.class_count();
        let train = self.load_features(Split::Train)?;
        let x = concat_features(&train.iter().collect::<Vec<_>>())?;
        let seed = derive_seed(self.cfg.seed, &[SEED_FUSION]);
        let mut model = FusionModel::new(self.ids(), FEATURE_DIM, classes, self.cfg.fusion.dropout, seed)?;
        let history = train_fusion(&mut model, &x, &train[0].labels, &self.cfg.fusion.schedule(), seed)?;

        let val = self.load_features(Split::Val)?;
        let val_pred = predict(&model, &concat_features(&val.iter().collect::<Vec<_>>())?)?;
        let val_accuracy = accuracy(&val_pred.labels, &val[0].labels);
        log::info!(
            "fusion: final loss {:.4}, val accuracy {:.4}",
            history.final_loss().unwrap_or(f64::NAN),
            val_accuracy
        );
        let model_path = self.path("models/fusion.cfck");
        ensure_parent(&model_path)?;
        save_fusion(&model, &model_path)?;
        let hist_path = self.path("models/fusion.history.json");
        write_json(
            &hist_path,
            &HistoryFile {
                config_hash: &self.hash,
                seed: self.cfg.seed,
                history: &history,
                val_accuracy,
            },
        )?;

        let test = self.load_features(EVAL_SPLIT)?;
        let pred = predict(&model, &concat_features(&test.iter().collect::<Vec<_>>())?)?;
        let pred_path = self.prediction_path("hdff");
        write_json(&pred_path, &prediction_file("hdff", &test[0], &pred))?;

        let checksums = self.check_frozen(&extract)?;
        self.record(
            Stage::TrainFusion,
            self.inputs_from(&[&heads]),
            &[model_path.clone(), sidecar(&model_path), hist_path, pred_path],
            checksums,
        )
    }

    fn predict_lf(&self) -> CliResult<()> {
        let extract = self.require(Stage::Extract)?;
        let heads = self.require(Stage::TrainHead)?;
        let mut preds = Vec::new();
        let mut outputs = Vec::new();
        let mut reference: Option<FeatureMatrix> = None;
        for id in self.ids() {
            let head = load_head(&self.head_path(&id))?;
            let test = FeatureMatrix::load(&self.trunk_path(&id, EVAL_SPLIT))?;
            let pred = predict(&head, &test.rows)?;
            let path = self.prediction_path(&id);
            write_json(&path, &prediction_file(&id, &test, &pred))?;
            outputs.push(path);
            preds.push(pred);
            reference.get_or_insert(test);
        }
        let reference = reference.expect("at least one backbone");
        let set = PredictionSet::new(preds, reference.labels.clone())?;
        let labels = set.late_fusion()?;
        let (n, c) = set.probs[0].dims2()?;
        let mut mean = Tensor::<f32>::zeros(&[n, c]);
        for p in &set.probs {
            for (m, &v) in mean.data_mut().iter_mut().zip(p.data()) {
                *m += v / set.probs.len() as f32;
            }
        }
        let lf = Prediction { probs: mean, labels };
        let path = self.prediction_path("lf");
        write_json(&path, &prediction_file("lf", &reference, &lf))?;
        outputs.push(path);
        self.record(
            Stage::PredictLf,
            self.inputs_from(&[&extract, &heads]),
            &outputs,
            BTreeMap::new(),
        )
    }

    /// Run names in report order: one per head, then late fusion and,
    /// with two or more backbones, feature fusion.
    pub fn run_names(&self) -> Vec<String> {
        let mut names = self.ids();
        names.push("lf".into());
        if self.uses_fusion() {
            names.push("hdff".into());
        }
        names
    }

    fn eval(&self) -> CliResult<()> {
        let mut ups = vec![self.require(Stage::PredictLf)?];
        if self.uses_fusion() {
            ups.push(self.require(Stage::TrainFusion)?);
        }
        let scheme = self.cfg.scheme()?;
        let mut runs = Vec::new();
        for name in self.run_names() {
            let pf: PredictionFile = read_json(&self.prediction_path(&name))?;
            let cm = confusion(&pf.truth, &pf.labels, scheme.class_count())?;
            let cm = ConfusionMatrix::from_counts(cm.counts, scheme.classes.clone())?;
            let m = metrics(&cm)?;
            log::info!("{name}: accuracy {:.4}", m.accuracy);
            runs.push(RunMetrics {
                name,
                confusion: cm,
                metrics: m,
            });
        }
        let file = MetricsFile {
            config_hash: self.hash.clone(),
            seed: self.cfg.seed,
            scheme: self.cfg.scheme.clone(),
            split: EVAL_SPLIT,
            runs,
        };
        let path = self.metrics_path();
        write_json(&path, &file)?;
        let refs: Vec<&StageRecord> = ups.iter().collect();
        self.record(Stage::Eval, self.inputs_from(&refs), &[path], BTreeMap::new())
    }

    /// Writes the comparison table and charts; returns the text table.
    pub fn report(&self) -> CliResult<String> {
        let up = self.require(Stage::Eval)?;
        let file: MetricsFile = read_json(&self.metrics_path())?;
        let runs: Vec<(String, MetricsReport)> =
            file.runs.iter().map(|r| (r.name.clone(), r.metrics.clone())).collect();
        let table = compare_report(&runs)?;
        let text = format!(
            "config {} seed {} scheme {} split {}\n{}",
            &file.config_hash[..12],
            file.seed,
            file.scheme,
            file.split,
            table.to_text()
        );
        let txt = self.path("reports/comparison.txt");
        write(&txt, text.as_bytes())?;
        let csv = self.path("reports/comparison.csv");
        write(&csv, table.to_csv()?.as_bytes())?;
        let chart = self.path("reports/accuracy.png");
        render_accuracy_chart(&table, &chart)?;
        let mut outputs = vec![txt, csv, chart];
        for r in &file.runs {
            let p = self.path(&format!("reports/confusion_{}.png", r.name));
            render_confusion_heatmap(&r.confusion, &p)?;
            outputs.push(p);
        }
        self.record(Stage::Report, self.inputs_from(&[&up]), &outputs, BTreeMap::new())?;
        Ok(text)
    }
}

fn sidecar(path: &Path) -> PathBuf {
    cervifuse_core::dataset::sidecar_path(path)
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// `(row indices, labels, paths)` of one split, in manifest order.
fn split_rows(m: &Manifest, split: Split) -> (Vec<usize>, Vec<usize>, Vec<String>) {
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut paths = Vec::new();
    for (i, r) in m.rows_in(split) {
        ids.push(i);
        labels.push(r.mapped_label);
        paths.push(r.path.clone());
    }
    (ids, labels, paths)
}

fn embed(backbone: &Backbone, images: &[RgbImage]) -> cervifuse_core::Result<Tensor<f32>> {
    let d = backbone.spec.output_dim;
    let mut data = Vec::with_capacity(images.len() * d);
    for chunk in images.chunks(EMBED_CHUNK) {
        data.extend(backbone.embed(chunk)?.into_data());
    }
    Tensor::new(vec![images.len(), d], data)
}

fn prediction_file(name: &str, rows: &FeatureMatrix, pred: &Prediction) -> PredictionFile {
    let (n, _) = pred.probs.dims2().expect("rank-2 probabilities");
    PredictionFile {
        name: name.to_string(),
        sample_ids: rows.sample_ids.clone(),
        truth: rows.labels.clone(),
        labels: pred.labels.clone(),
        probs: (0..n).map(|i| pred.probs.row(i).to_vec()).collect(),
    }
}

/// Runs every stage in order.
pub fn run_all(cfg: ExperimentConfig) -> CliResult<Run> {
    let run = Run::open(cfg)?;
    for stage in Stage::ALL {
        if stage == Stage::TrainFusion && !run.uses_fusion() {
            continue;
        }
        run.execute(stage)?;
    }
    Ok(run)
}
