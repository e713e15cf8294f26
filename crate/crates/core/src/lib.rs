//! Per-frame capillary density analysis.
//!
//! A frame goes through two stages: a classical region proposal (background
//! estimate, SSIM against the frame, connected low-similarity regions) and a
//! small CNN that decides whether each proposed region is a capillary. The
//! density is the fraction of frame pixels covered by capillary region masks.
//!
//! Everything in this crate is single-threaded and deterministic; the
//! parallel executors live in `capx-engine`.

pub mod cnn;
pub mod image;
pub mod pipeline;
pub mod segmentation;
pub mod synth;

pub use crate::image::{
    load_frame, save_annotated, to_grayscale, BinaryMask, BoundingBox, DensityResult, Frame,
    GrayImage, ImageError, Label, RegionResult,
};
pub use cnn::{CnnError, CnnModel, Tensor};
pub use pipeline::{analyze_frame, compute_density, PipelineConfig, PipelineError};
