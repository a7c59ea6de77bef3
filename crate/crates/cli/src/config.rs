//! Experiment configuration (TOML).
//!
//! ```toml
//! seed = 7
//! dataset_root = "data"
//! scheme = "synthetic-5"
//! out_dir = "runs"
//!
//! [augment]
//! copies = 6
//! online = false
//!
//! [[backbones]]
//! id = "toy_a"
//! kind = "toy"
//! seed = 1
//!
//! [[backbones]]
//! id = "vgg16"
//! kind = "interchange"
//! path = "trunks/vgg16.onnx"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use cervifuse_core::backbone::BackboneSpec;
use cervifuse_core::dataset::{ClassScheme, SplitFractions};
use cervifuse_core::fusion::{Phase, Schedule, FUSION_DROPOUT};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset_root: PathBuf,
    pub scheme: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    pub backbones: Vec<BackboneConfig>,
    #[serde(default = "TrainConfig::head")]
    pub head: TrainConfig,
    #[serde(default = "TrainConfig::fusion")]
    pub fusion: TrainConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let f = SplitFractions::default();
        Self {
            train: f.train,
            val: f.val,
            test: f.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Offline copies per training image.
    pub copies: usize,
    /// Random per-epoch transforms while training heads.
    pub online: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { copies: 6, online: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Toy,
    Interchange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub id: String,
    pub kind: BackboneKind,
    /// Filter seed of a toy trunk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Square input side of a toy trunk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_size: Option<u32>,
    /// Interchange file; its manifest sits next to it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

pub const DEFAULT_TOY_INPUT: u32 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub phases: Vec<Phase>,
    pub batch_size: usize,
    pub dropout: f64,
}

impl TrainConfig {
    pub fn head() -> Self {
        let s = Schedule::head_default();
        Self {
            phases: s.phases,
            batch_size: s.batch_size,
            dropout: 0.5,
        }
    }

    pub fn fusion() -> Self {
        let s = Schedule::fusion_default();
        Self {
            phases: s.phases,
            batch_size: s.batch_size,
            dropout: FUSION_DROPOUT,
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            phases: self.phases.clone(),
            batch_size: self.batch_size,
        }
    }

    fn validate(&self, field: &str) -> CliResult<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid(&format!("{field}.dropout"), "must be in [0, 1)"));
        }
        self.schedule()
            .validate()
            .map_err(|e| invalid(&format!("{field}.phases"), &e.to_string()))
    }
}

fn invalid(field: &str, msg: &str) -> CliError {
    CliError::Validation(format!("config {field}: {msg}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Parses, resolves relative paths against the file's directory, and validates.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset_root);
        fix(&mut self.out_dir);
        for b in &mut self.backbones {
            if let Some(p) = &mut b.path {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        ClassScheme::builtin(&self.scheme).map_err(|e| invalid("scheme", &e.to_string()))?;
        if !self.dataset_root.is_dir() {
            return Err(invalid(
                "dataset_root",
                &format!("{} is not a directory", self.dataset_root.display()),
            ));
        }
        self.fractions()
            .validate()
            .map_err(|e| invalid("split", &e.to_string()))?;
        if self.backbones.is_empty() {
            return Err(invalid("backbones", "at least one backbone is required"));
        }
        for (i, b) in self.backbones.iter().enumerate() {
            let field = format!("backbones[{i}]");
            if b.id.is_empty() || !b.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(invalid(&format!("{field}.id"), "must be non-empty [A-Za-z0-9_-]"));
            }
            if self.backbones[..i].iter().any(|o| o.id == b.id) {
                return Err(invalid(&format!("{field}.id"), &format!("duplicate id {}", b.id)));
            }
            match b.kind {
                BackboneKind::Toy => {
                    if b.seed.is_none() {
                        return Err(invalid(&format!("{field}.seed"), "required for toy trunks"));
                    }
                    if b.path.is_some() {
                        return Err(invalid(&format!("{field}.path"), "not used by toy trunks"));
                    }
                    if b.input_size.is_some_and(|s| s < 8) {
                        return Err(invalid(&format!("{field}.input_size"), "must be at least 8"));
                    }
                }
                BackboneKind::Interchange => match &b.path {
                    None => return Err(invalid(&format!("{field}.path"), "required for interchange trunks")),
                    Some(p) if !p.is_file() => {
                        return Err(invalid(&format!("{field}.path"), &format!("{} does not exist", p.display())))
                    }
                    Some(_) => {}
                },
            }
        }
        self.head.validate("head")?;
        self.fusion.validate("fusion")?;
        Ok(())
    }

    pub fn fractions(&self) -> SplitFractions {
        SplitFractions {
            train: self.split.train,
            val: self.split.val,
            test: self.split.test,
        }
    }

    pub fn scheme(&self) -> CliResult<ClassScheme> {
        ClassScheme::builtin(&self.scheme).map_err(|e| invalid("scheme", &e.to_string()))
    }

    pub fn backbone_spec(&self, b: &BackboneConfig) -> CliResult<BackboneSpec> {
        match b.kind {
            BackboneKind::Toy => Ok(BackboneSpec::toy(
                &b.id,
                b.seed.unwrap_or_default(),
                b.input_size.unwrap_or(DEFAULT_TOY_INPUT),
            )),
            BackboneKind::Interchange => {
                let path = b.path.as_deref().unwrap_or(Path::new(""));
                BackboneSpec::interchange(&b.id, path).map_err(CliError::from)
            }
        }
    }

    /// Hex SHA-256 of everything that affects results. The output
    /// directory is excluded so a run can be relocated.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex(&Sha256::digest(json))
    }

    /// Artifacts of this configuration live under `out_dir/run-<hash prefix>`.
    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(format!("run-{}", &self.hash()[..12]))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        seed = 3
        dataset_root = "."
        scheme = "synthetic-5"
        [[backbones]]
        id = "a"
        kind = "toy"
        seed = 1
    "#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.augment.copies, 6);
        assert_eq!(c.head.phases.len(), 2);
        assert_eq!(c.fusion.dropout, 0.5);
        c.validate().unwrap();
    }

    #[test]
    fn seed_is_mandatory() {
        let err = ExperimentConfig::parse(&MINIMAL.replace("seed = 3", "")).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn errors_name_the_field() {
        let c = ExperimentConfig::parse(&MINIMAL.replace("seed = 1", "")).unwrap();
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("backbones[0].seed"), "{err}");
        let c = ExperimentConfig::parse(&MINIMAL.replace("\"toy\"", "\"interchange\"")).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("backbones[0].path"));
    }

    #[test]
    fn hash_ignores_out_dir_only() {
        let a = ExperimentConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = 4;
        assert_ne!(a.hash(), b.hash());
    }
}
