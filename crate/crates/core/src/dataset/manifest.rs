use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scheme::{ClassScheme, Target};
use crate::{Error, Result};

pub const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Unassigned,
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Unassigned => "unassigned",
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Original,
    Augmented,
}

/// One labeled image. `source_index` points at the original row an
/// augmented copy was derived from (an original points at itself).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSample {
    pub path: String,
    pub raw_label: String,
    pub mapped_label: usize,
    pub split: Split,
    pub origin: Origin,
    pub source_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub rows: Vec<ImageSample>,
    pub scheme: ClassScheme,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    scheme: ClassScheme,
    seed: u64,
}

/// Scheme and seed travel next to the CSV in `<file>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl Manifest {
    pub fn empty(scheme: ClassScheme, seed: u64) -> Self {
        Self {
            rows: Vec::new(),
            scheme,
            seed,
        }
    }

    pub fn rows_in(&self, split: Split) -> impl Iterator<Item = (usize, &ImageSample)> {
        self.rows.iter().enumerate().filter(move |(_, r)| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.rows_in(split).count()
    }

    /// `counts[class]` for one split.
    pub fn class_counts(&self, split: Split) -> Vec<usize> {
        let mut c = vec![0; self.scheme.class_count()];
        for (_, r) in self.rows_in(split) {
            c[r.mapped_label] += 1;
        }
        c
    }

    pub fn check_unique_paths(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.rows.len());
        for r in &self.rows {
            if !seen.insert(r.path.as_str()) {
                return Err(Error::DuplicatePath(r.path.clone()));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        self.check_unique_paths()?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(["path", "raw_label", "mapped_label", "split", "origin", "source_index"])?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.into_inner()
            .map_err(|e| Error::Format(format!("csv flush: {e}")))
    }

    pub fn from_csv(bytes: &[u8], scheme: ClassScheme, seed: u64, origin: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(bytes);
        let header = reader.headers()?.clone();
        let want = ["path", "raw_label", "mapped_label", "split", "origin", "source_index"];
        if header.iter().ne(want) {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: 1,
                msg: format!("expected header {}", want.join(",")),
            });
        }
        let mut rows = Vec::new();
        for rec in reader.deserialize::<ImageSample>() {
            let row = rec.map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            })?;
            if row.mapped_label >= scheme.class_count() {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: rows.len() + 2,
                    msg: format!(
                        "mapped_label {} outside scheme {} ({} classes)",
                        row.mapped_label,
                        scheme.name,
                        scheme.class_count()
                    ),
                });
            }
            rows.push(row);
        }
        let m = Self { rows, scheme, seed };
        m.check_unique_paths()?;
        Ok(m)
    }
}

pub fn save_manifest(m: &Manifest, path: &Path) -> Result<()> {
    let csv = m.to_csv()?;
    let side = serde_json::to_vec_pretty(&Sidecar {
        scheme: m.scheme.clone(),
        seed: m.seed,
    })?;
    std::fs::write(path, csv).map_err(|e| Error::io(path, e))?;
    let sp = sidecar_path(path);
    std::fs::write(&sp, side).map_err(|e| Error::io(sp, e))
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let sp = sidecar_path(path);
    let side: Sidecar =
        serde_json::from_slice(&std::fs::read(&sp).map_err(|e| Error::io(&sp, e))?)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Manifest::from_csv(&bytes, side.scheme, side.seed, path)
}

fn collect_images(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_images(&p, out)?;
        } else if p
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_lowercase().as_str()))
        {
            out.push(p);
        }
    }
    Ok(())
}

/// Scans `root/<raw_label>/**/<image>`; rows whose label the scheme
/// excludes are dropped. Every subdirectory must be known to the scheme.
pub fn ingest(root: &Path, scheme: &ClassScheme) -> Result<Manifest> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();

    let unknown: Vec<String> = dirs
        .iter()
        .filter_map(|d| d.file_name().and_then(|n| n.to_str()))
        .filter(|n| scheme.target(n).is_none())
        .map(str::to_string)
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnmappedLabel(unknown));
    }

    let mut rows = Vec::new();
    for dir in &dirs {
        let raw = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let Some(Target::Class(class)) = scheme.target(raw) else {
            continue;
        };
        let mut files = Vec::new();
        collect_images(dir, &mut files)?;
        for f in files {
            let idx = rows.len();
            rows.push(ImageSample {
                path: f.to_string_lossy().into_owned(),
                raw_label: raw.to_string(),
                mapped_label: class,
                split: Split::Unassigned,
                origin: Origin::Original,
                source_index: idx,
            });
        }
    }
    if rows.is_empty() {
        log::warn!("no images found under {}", root.display());
    }
    Ok(Manifest {
        rows,
        scheme: scheme.clone(),
        seed: 0,
    })
}
