//! One frame end to end: background, SSIM, regions, CNN, density.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use web_time::Instant;

use crate::cnn::{Classification, CnnError, CnnModel};
use crate::image::{to_grayscale, DensityResult, Frame, GrayImage, Label, RegionResult};
use crate::segmentation::{
    candidate_mask, crop_patch, estimate_background_static, extract_regions, ssim_map,
    BackgroundModel, CandidateRegion, GmmConfig, SegmentationError, DEFAULT_C1, DEFAULT_C2,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundMode {
    /// Blur of the frame itself.
    Still,
    /// Mixture model trained over the whole sequence, shared by every frame.
    Sequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub ssim_threshold: f64,
    pub ssim_window: usize,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
    pub min_area: usize,
    pub max_regions: usize,
    pub background: BackgroundMode,
    /// Gaussian radius for the still-frame background.
    pub blur_radius: usize,
    pub gmm: GmmConfig,
    pub cnn_input_size: usize,
    pub weights: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ssim_threshold: 0.75,
            ssim_window: 7,
            ssim_c1: DEFAULT_C1,
            ssim_c2: DEFAULT_C2,
            min_area: 25,
            max_regions: 512,
            background: BackgroundMode::Still,
            blur_radius: 12,
            gmm: GmmConfig::default(),
            cnn_input_size: 64,
            weights: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), SegmentationError> {
        let bad = |msg: String| Err(SegmentationError::Config(msg));
        if !(-1.0..=1.0).contains(&self.ssim_threshold) {
            return bad(format!("ssim_threshold must be in [-1, 1], got {}", self.ssim_threshold));
        }
        if self.ssim_window < 3 || self.ssim_window.is_multiple_of(2) {
            return bad(format!("ssim_window must be odd and >= 3, got {}", self.ssim_window));
        }
        if !(self.ssim_c1 > 0.0 && self.ssim_c2 > 0.0) {
            return bad("ssim constants must be positive".into());
        }
        if self.min_area < 1 {
            return bad("min_area must be >= 1".into());
        }
        if self.max_regions < 1 {
            return bad("max_regions must be >= 1".into());
        }
        if self.blur_radius < 1 {
            return bad("blur_radius must be >= 1".into());
        }
        if self.cnn_input_size < 1 {
            return bad("cnn_input_size must be >= 1".into());
        }
        self.gmm.validate()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("frame {frame_id}: {source}")]
    Segmentation {
        frame_id: String,
        #[source]
        source: SegmentationError,
    },
    #[error("frame {frame_id}: {source}")]
    Cnn {
        frame_id: String,
        #[source]
        source: CnnError,
    },
}

impl PipelineError {
    pub fn frame_id(&self) -> &str {
        match self {
            PipelineError::Segmentation { frame_id, .. } | PipelineError::Cnn { frame_id, .. } => frame_id,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassifiedRegion {
    pub region: CandidateRegion,
    pub classification: Classification,
}

/// Candidate regions of `gray` against `background`.
pub fn propose_regions(
    gray: &GrayImage,
    background: &GrayImage,
    config: &PipelineConfig,
) -> Result<Vec<CandidateRegion>, SegmentationError> {
    let sim = ssim_map(gray, background, config.ssim_window, config.ssim_c1, config.ssim_c2)?;
    let mask = candidate_mask(&sim, config.ssim_threshold);
    Ok(extract_regions(&mask, config.min_area, config.max_regions))
}

/// Analyzes a still frame using its own blurred copy as background.
pub fn analyze_frame(
    frame: &Frame,
    model: &CnnModel,
    config: &PipelineConfig,
) -> Result<DensityResult, PipelineError> {
    let start = Instant::now();
    let gray = to_grayscale(frame);
    let background = estimate_background_static(&gray, config.blur_radius.max(1));
    analyze_gray(frame.id(), &gray, &background, model, config, start)
}

/// Analyzes a frame against a precomputed background (sequence mode).
pub fn analyze_frame_with_background(
    frame: &Frame,
    background: &GrayImage,
    model: &CnnModel,
    config: &PipelineConfig,
) -> Result<DensityResult, PipelineError> {
    let start = Instant::now();
    let gray = to_grayscale(frame);
    analyze_gray(frame.id(), &gray, background, model, config, start)
}

fn analyze_gray(
    frame_id: &str,
    gray: &GrayImage,
    background: &GrayImage,
    model: &CnnModel,
    config: &PipelineConfig,
    start: Instant,
) -> Result<DensityResult, PipelineError> {
    let seg_err = |source| PipelineError::Segmentation {
        frame_id: frame_id.to_owned(),
        source,
    };
    let cnn_err = |source| PipelineError::Cnn {
        frame_id: frame_id.to_owned(),
        source,
    };
    config.validate().map_err(seg_err)?;
    if model.input_shape() != [config.cnn_input_size, config.cnn_input_size, 1] {
        return Err(cnn_err(CnnError::Config(format!(
            "model input {:?} does not match configured patch size {}",
            model.input_shape(),
            config.cnn_input_size
        ))));
    }
    let regions = propose_regions(gray, background, config).map_err(seg_err)?;
    let mut classified = Vec::with_capacity(regions.len());
    for region in regions {
        let patch = crop_patch(gray, &region, config.cnn_input_size).map_err(seg_err)?;
        let classification = model.classify_patch(&patch).map_err(cnn_err)?;
        classified.push(ClassifiedRegion {
            region,
            classification,
        });
    }
    let density = compute_density(&classified, gray.width(), gray.height());
    let regions = classified
        .into_iter()
        .map(|c| RegionResult {
            bbox: c.region.bbox,
            label: c.classification.label,
            confidence: c.classification.confidence,
            mask: Some(c.region.mask),
        })
        .collect();
    Ok(DensityResult {
        frame_id: frame_id.to_owned(),
        density,
        elapsed_s: start.elapsed().as_secs_f64(),
        regions,
    })
}

/// Fraction of the frame covered by the union of capillary region masks.
pub fn compute_density(regions: &[ClassifiedRegion], width: usize, height: usize) -> f64 {
    let capillaries: Vec<&CandidateRegion> = regions
        .iter()
        .filter(|r| r.classification.label == Label::Capillary)
        .map(|r| &r.region)
        .collect();
    if capillaries.is_empty() || width == 0 || height == 0 {
        return 0.0;
    }
    let mut covered = vec![false; width * height];
    let mut count = 0usize;
    for region in capillaries {
        for (x, y) in region.pixels() {
            if x < width && y < height && !std::mem::replace(&mut covered[y * width + x], true) {
                count += 1;
            }
        }
    }
    count as f64 / (width * height) as f64
}

/// Trains a mixture model over `frames` in order and returns its background.
pub fn sequence_background<'a>(
    frames: impl IntoIterator<Item = &'a Frame>,
    gmm: &GmmConfig,
) -> Result<GrayImage, SegmentationError> {
    let mut frames = frames.into_iter().peekable();
    let first = frames
        .peek()
        .ok_or_else(|| SegmentationError::Config("sequence background needs at least one frame".into()))?;
    let mut model = BackgroundModel::new(first.width(), first.height(), gmm.clone())?;
    for frame in frames {
        model.update(&to_grayscale(frame))?;
    }
    Ok(model.background_image())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::{build_architecture, Layer, Tensor};
    use crate::image::{BinaryMask, BoundingBox};
    use std::collections::HashSet;

    fn classified(bbox: BoundingBox, mask: BinaryMask, label: Label) -> ClassifiedRegion {
        ClassifiedRegion {
            region: CandidateRegion { bbox, mask },
            classification: Classification { label, confidence: 1.0 },
        }
    }

    fn full(b: BoundingBox, label: Label) -> ClassifiedRegion {
        classified(b, BinaryMask::from_bits(b.w, b.h, vec![true; b.area()]), label)
    }

    /// A model whose logits are just its final bias: always capillary.
    fn stub_model(input: usize) -> CnnModel {
        let base = build_architecture(input, &[1, 1, 1], &[2]).unwrap();
        let mut layers: Vec<Layer> = base.layers().iter().map(|l| l.layer.clone()).collect();
        if let Some(Layer::Dense { bias, .. }) = layers.iter_mut().rev().find(|l| matches!(l, Layer::Dense { .. })) {
            *bias = Tensor::from_vec(vec![10.0, 0.0]);
        }
        CnnModel::from_layers(vec![input, input, 1], layers).unwrap()
    }

    #[test]
    fn density_examples() {
        assert_eq!(compute_density(&[], 10, 10), 0.0);
        let not = full(BoundingBox::new(0, 0, 5, 5), Label::NotCapillary);
        assert_eq!(compute_density(&[not], 10, 10), 0.0);
        let all = full(BoundingBox::new(0, 0, 10, 10), Label::Capillary);
        assert_eq!(compute_density(&[all], 10, 10), 1.0);
        let a = full(BoundingBox::new(0, 0, 2, 2), Label::Capillary);
        let b = full(BoundingBox::new(1, 0, 2, 2), Label::Capillary);
        assert_eq!(compute_density(&[a, b], 10, 10), 0.06);
    }

    #[test]
    fn density_uses_mask_not_bbox() {
        let mut mask = BinaryMask::empty(3, 3);
        mask.set(0, 0, true);
        mask.set(2, 2, true);
        let r = classified(BoundingBox::new(1, 1, 3, 3), mask, Label::Capillary);
        assert_eq!(compute_density(&[r], 4, 4), 2.0 / 16.0);
    }

    use proptest::prelude::*;

    fn arb_region(w: usize, h: usize) -> impl Strategy<Value = ClassifiedRegion> {
        (0..w, 0..h, 1usize..6, 1usize..6, any::<u64>(), any::<bool>()).prop_map(move |(x, y, bw, bh, seed, cap)| {
            let bw = bw.min(w - x);
            let bh = bh.min(h - y);
            let mut s = seed;
            let bits = (0..bw * bh)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    s >> 63 == 1
                })
                .collect();
            let label = if cap { Label::Capillary } else { Label::NotCapillary };
            classified(BoundingBox::new(x, y, bw, bh), BinaryMask::from_bits(bw, bh, bits), label)
        })
    }

    proptest! {
        #[test]
        fn density_is_union_count(regions in prop::collection::vec(arb_region(12, 9), 0..8)) {
            let mut set = HashSet::new();
            for r in regions.iter().filter(|r| r.classification.label == Label::Capillary) {
                set.extend(r.region.pixels());
            }
            let d = compute_density(&regions, 12, 9);
            prop_assert_eq!(d, set.len() as f64 / 108.0);
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn density_monotone(regions in prop::collection::vec(arb_region(10, 10), 1..6), extra in arb_region(10, 10)) {
            let base = compute_density(&regions, 10, 10);
            let mut more = regions.clone();
            let mut extra = extra;
            extra.classification.label = Label::Capillary;
            more.push(extra);
            prop_assert!(compute_density(&more, 10, 10) >= base);
            let mut fewer = regions.clone();
            fewer[0].classification.label = Label::NotCapillary;
            prop_assert!(compute_density(&fewer, 10, 10) <= base);
        }
    }

    #[test]
    fn constant_frame_has_no_regions() {
        let frame = Frame::new("c", 80, 60, 3, [180, 90, 90].repeat(80 * 60)).unwrap();
        let config = PipelineConfig { cnn_input_size: 24, ..Default::default() };
        let r = analyze_frame(&frame, &stub_model(24), &config).unwrap();
        assert!(r.regions.is_empty());
        assert_eq!(r.density, 0.0);
    }

    #[test]
    fn dark_blob_with_always_capillary_model() {
        let (w, h) = (96, 72);
        let mut data = vec![170u8; w * h];
        for y in 30..40 {
            for x in 40..52 {
                data[y * w + x] = 40;
            }
        }
        let frame = Frame::new("blob", w, h, 1, data).unwrap();
        let config = PipelineConfig { cnn_input_size: 24, ..Default::default() };
        let model = stub_model(24);
        let result = analyze_frame(&frame, &model, &config).unwrap();

        // oracle: recompute the low-similarity mask directly and count components >= min_area
        let gray = to_grayscale(&frame);
        let bg = estimate_background_static(&gray, config.blur_radius);
        let sim = ssim_map(&gray, &bg, 7, DEFAULT_C1, DEFAULT_C2).unwrap();
        let mask = candidate_mask(&sim, 0.75);
        let kept: usize = extract_regions(&mask, 25, 512).iter().map(|r| r.area()).sum();
        assert!(kept > 0);
        assert!(result.regions.iter().all(|r| r.label == Label::Capillary));
        assert_eq!(result.density, kept as f64 / (w * h) as f64);
        // the blob itself is inside the proposal
        let covered: HashSet<(usize, usize)> = result
            .regions
            .iter()
            .flat_map(|r| {
                let b = r.bbox;
                let m = r.mask.clone().unwrap();
                (0..b.h).flat_map(move |y| (0..b.w).filter(|&x| m.get(x, y)).map(move |x| (b.x + x, b.y + y)).collect::<Vec<_>>())
            })
            .collect();
        assert!(covered.contains(&(45, 35)));

        let again = analyze_frame(&frame, &model, &config).unwrap();
        assert!(again.same_outcome(&result));
    }

    #[test]
    fn model_size_mismatch_is_tagged() {
        let frame = Frame::new("m", 40, 40, 1, vec![0; 1600]).unwrap();
        let err = analyze_frame(&frame, &stub_model(24), &PipelineConfig::default()).unwrap_err();
        assert_eq!(err.frame_id(), "m");
        assert!(matches!(err, PipelineError::Cnn { .. }));
    }

    #[test]
    fn config_validation_and_json() {
        let bad = PipelineConfig { ssim_window: 4, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig { ssim_threshold: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let partial: PipelineConfig = serde_json::from_str(r#"{"min_area": 9, "background": "sequence"}"#).unwrap();
        assert_eq!(partial.min_area, 9);
        assert_eq!(partial.background, BackgroundMode::Sequence);
        assert_eq!(partial.max_regions, 512);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn sequence_background_tracks_static_scene() {
        let frames: Vec<Frame> = (0..60)
            .map(|i| Frame::new(format!("f{i}"), 4, 4, 1, vec![100; 16]).unwrap())
            .collect();
        let bg = sequence_background(&frames, &GmmConfig::default()).unwrap();
        assert!(bg.data().iter().all(|&v| v.abs_diff(100) <= 1));
    }
}
