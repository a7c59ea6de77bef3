//! Image augmentation: pixel-level operations, offline dataset expansion,
//! and per-epoch online transforms.

mod color;
mod edges;
mod geometry;
mod histogram;
mod offline;
mod online;

pub use color::{
    channel_shuffle, contrast_brightness, gamma_contrast, grayscale, hue_saturation, luminance, quantize,
    quantize16,
};
pub use edges::{canny, directed_edge_detect, edge_detect, sobel, Gradients, CANNY_HIGH, CANNY_LOW};
pub use geometry::{affine, AffineParams};
pub use histogram::{all_channel_clahe, clahe, clahe_gray, DEFAULT_CLIP_LIMIT, DEFAULT_TILES};
pub use offline::{augmented_name, generate_offline, load_rgb, AugGroup, AugOp, AugPipeline, Range, OPTIONAL_GROUP_PROBABILITY};
pub use online::{online_augment, online_augment_one, OnlineAugConfig};
