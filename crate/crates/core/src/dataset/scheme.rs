use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Where a raw (directory) label goes under a scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Class(usize),
    Exclude,
}

/// Mapping from raw dataset labels to target classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassScheme {
    pub name: String,
    pub classes: Vec<String>,
    /// Keys are normalized raw labels (see [`normalize_label`]).
    pub mapping: BTreeMap<String, Target>,
}

/// Raw label directory names of a synthetic dataset with `c` classes.
pub fn synthetic_labels(c: usize) -> Vec<String> {
    (0..c).map(|k| format!("class_{k}")).collect()
}

/// Lowercases, drops an `im_` archive prefix, and folds `-`/space to `_`.
pub fn normalize_label(raw: &str) -> String {
    let lower = raw.trim().to_lowercase();
    let stripped = lower.strip_prefix("im_").unwrap_or(&lower);
    stripped.replace(['-', ' '], "_")
}

const SIPAKMED_NORMAL: &[&str] = &["superficial_intermediate", "superficial", "parabasal"];
const SIPAKMED_ABNORMAL: &[&str] = &["koilocytotic", "dyskeratotic"];
const SIPAKMED_BENIGN: &[&str] = &["metaplastic"];

const HERLEV_NORMAL: &[&str] = &[
    "normal_superficiel",
    "normal_superficial",
    "normal_squamous",
    "normal_intermediate",
    "intermediate_squamous",
    "normal_columnar",
    "columnar",
];
const HERLEV_ABNORMAL: &[&str] = &[
    "light_dysplastic",
    "mild_dysplasia",
    "moderate_dysplastic",
    "moderate_dysplasia",
    "severe_dysplastic",
    "severe_dysplasia",
    "carcinoma_in_situ",
];

impl ClassScheme {
    pub fn new(name: &str, classes: Vec<String>, mapping: BTreeMap<String, Target>) -> Result<Self> {
        for (k, t) in &mapping {
            if let Target::Class(c) = t {
                if *c >= classes.len() {
                    return Err(Error::InvalidParameter(format!(
                        "raw label {k} maps to class {c}, scheme has {}",
                        classes.len()
                    )));
                }
            }
        }
        for (c, name) in classes.iter().enumerate() {
            if !mapping.values().any(|t| *t == Target::Class(c)) {
                return Err(Error::InvalidParameter(format!(
                    "class {name} has no raw label mapped to it"
                )));
            }
        }
        Ok(Self {
            name: name.to_string(),
            classes,
            mapping,
        })
    }

    fn grouped(name: &str, groups: &[(&str, &[&str])], excluded: &[&str]) -> Self {
        let mut mapping = BTreeMap::new();
        for (c, (_, raws)) in groups.iter().enumerate() {
            for r in *raws {
                mapping.insert(r.to_string(), Target::Class(c));
            }
        }
        for r in excluded {
            mapping.insert(r.to_string(), Target::Exclude);
        }
        let classes = groups.iter().map(|(n, _)| n.to_string()).collect();
        Self::new(name, classes, mapping).expect("built-in scheme is consistent")
    }

    /// One class per raw label, in the given order.
    pub fn identity(name: &str, labels: &[&str]) -> Result<Self> {
        let mapping = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (normalize_label(l), Target::Class(i)))
            .collect();
        Self::new(name, labels.iter().map(|l| normalize_label(l)).collect(), mapping)
    }

    /// Built-in schemes: `sipakmed-5`, `sipakmed-3`, `sipakmed-2`,
    /// `herlev-7`, `herlev-2`, and `synthetic-<C>` for C in 2..=7 (raw
    /// labels `class_0` .. `class_<C-1>`).
    pub fn builtin(name: &str) -> Result<Self> {
        let s = match name {
            "sipakmed-5" => Self::grouped(
                name,
                &[
                    ("superficial_intermediate", &SIPAKMED_NORMAL[..2]),
                    ("parabasal", &SIPAKMED_NORMAL[2..]),
                    ("koilocytotic", &SIPAKMED_ABNORMAL[..1]),
                    ("dyskeratotic", &SIPAKMED_ABNORMAL[1..]),
                    ("metaplastic", SIPAKMED_BENIGN),
                ],
                &[],
            ),
            "sipakmed-3" => Self::grouped(
                name,
                &[
                    ("normal", SIPAKMED_NORMAL),
                    ("abnormal", SIPAKMED_ABNORMAL),
                    ("benign", SIPAKMED_BENIGN),
                ],
                &[],
            ),
            "sipakmed-2" => Self::grouped(
                name,
                &[("normal", SIPAKMED_NORMAL), ("abnormal", SIPAKMED_ABNORMAL)],
                SIPAKMED_BENIGN,
            ),
            "herlev-7" => Self::grouped(
                name,
                &[
                    ("normal_superficial", &HERLEV_NORMAL[..3]),
                    ("normal_intermediate", &HERLEV_NORMAL[3..5]),
                    ("normal_columnar", &HERLEV_NORMAL[5..]),
                    ("mild_dysplasia", &HERLEV_ABNORMAL[..2]),
                    ("moderate_dysplasia", &HERLEV_ABNORMAL[2..4]),
                    ("severe_dysplasia", &HERLEV_ABNORMAL[4..6]),
                    ("carcinoma_in_situ", &HERLEV_ABNORMAL[6..]),
                ],
                &[],
            ),
            "herlev-2" => Self::grouped(
                name,
                &[("normal", HERLEV_NORMAL), ("abnormal", HERLEV_ABNORMAL)],
                &[],
            ),
            other => match other.strip_prefix("synthetic-").and_then(|c| c.parse::<usize>().ok()) {
                Some(c) if (2..=7).contains(&c) => {
                    let labels = synthetic_labels(c);
                    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
                    Self::identity(name, &refs)?
                }
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown class scheme {other:?}; built-ins are sipakmed-5, sipakmed-3, \
                         sipakmed-2, herlev-7, herlev-2, synthetic-2 .. synthetic-7"
                    )))
                }
            },
        };
        Ok(s)
    }

    pub fn target(&self, raw_label: &str) -> Option<Target> {
        self.mapping.get(&normalize_label(raw_label)).copied()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }
}
