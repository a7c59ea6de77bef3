//! Labeled image manifests, class schemes, and per-class splitting.

mod manifest;
mod scheme;
mod split;

pub use manifest::{
    ingest, load_manifest, save_manifest, sidecar_path, ImageSample, Manifest, Origin, Split,
    IMAGE_EXTENSIONS,
};
pub use scheme::{normalize_label, synthetic_labels, ClassScheme, Target};
pub use split::{stratified_split, SplitFractions, MIN_CLASS_SIZE};
