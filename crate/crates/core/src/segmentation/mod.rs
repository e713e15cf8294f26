//! Region proposal: background estimate, SSIM against the frame, and
//! connected low-similarity regions.

mod blur;
mod crop;
mod gmm;
mod regions;
mod ssim;

use thiserror::Error;

pub use blur::{estimate_background_static, gaussian_kernel};
pub use crop::crop_patch;
pub use gmm::{BackgroundModel, GaussianComponent, GmmConfig};
pub use regions::{candidate_mask, extract_regions, CandidateRegion};
pub use ssim::{ssim_from_sums, ssim_map, SimilarityMap, DEFAULT_C1, DEFAULT_C2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("invalid segmentation config: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
}
