//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export regenerates the synthetic frame from `(seed, index, width,
//! height)`, so the page only passes numbers and receives RGBA buffers.

use std::sync::OnceLock;

use capx_core::cnn::{intensity_model, DEFAULT_INTENSITY_THRESHOLD};
use capx_core::image::annotate;
use capx_core::segmentation::{candidate_mask, estimate_background_static, ssim_map};
use capx_core::synth::generate_frame;
use capx_core::{analyze_frame, to_grayscale, CnnModel, Frame, PipelineConfig};
use wasm_bindgen::prelude::*;

const MIN_SIDE: u32 = 32;
const MAX_WIDTH: u32 = 1920;
const MAX_HEIGHT: u32 = 1080;

fn model() -> &'static CnnModel {
    static MODEL: OnceLock<CnnModel> = OnceLock::new();
    MODEL.get_or_init(|| intensity_model(64, DEFAULT_INTENSITY_THRESHOLD).expect("built-in model"))
}

fn frame(seed: u32, index: u32, width: u32, height: u32) -> Frame {
    let w = width.clamp(MIN_SIDE, MAX_WIDTH) as usize;
    let h = height.clamp(MIN_SIDE, MAX_HEIGHT) as usize;
    generate_frame(u64::from(seed), index as usize, w, h)
}

fn config(threshold: f64) -> PipelineConfig {
    PipelineConfig {
        ssim_threshold: threshold.clamp(-1.0, 1.0),
        ..PipelineConfig::default()
    }
}

fn rgba(frame: &Frame) -> Vec<u8> {
    let rgb = frame.to_rgb();
    rgb.data().chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

/// Frame size after clamping, as `[width, height]`.
#[wasm_bindgen]
pub fn frame_size(width: u32, height: u32) -> Vec<u32> {
    vec![width.clamp(MIN_SIDE, MAX_WIDTH), height.clamp(MIN_SIDE, MAX_HEIGHT)]
}

/// The synthetic frame as RGBA.
#[wasm_bindgen]
pub fn synth_frame(seed: u32, index: u32, width: u32, height: u32) -> Vec<u8> {
    rgba(&frame(seed, index, width, height))
}

/// SSIM against the blurred background as a heat map; pixels below
/// `threshold` (the candidate mask) are tinted magenta.
#[wasm_bindgen]
pub fn similarity_map(seed: u32, index: u32, width: u32, height: u32, threshold: f64) -> Vec<u8> {
    let f = frame(seed, index, width, height);
    let cfg = config(threshold);
    let gray = to_grayscale(&f);
    let background = estimate_background_static(&gray, cfg.blur_radius);
    let sim = ssim_map(&gray, &background, cfg.ssim_window, cfg.ssim_c1, cfg.ssim_c2).expect("same size");
    let mask = candidate_mask(&sim, cfg.ssim_threshold);
    let mut out = Vec::with_capacity(sim.values().len() * 4);
    for (v, &candidate) in sim.values().iter().zip(mask.bits()) {
        // 1 → dark blue, 0 and below → bright yellow
        let t = ((1.0 - v) * 2.0).clamp(0.0, 1.0);
        let heat = [(255.0 * t) as u8, (200.0 * t) as u8, (90.0 * (1.0 - t)) as u8];
        if candidate {
            out.extend_from_slice(&[255, 0, 200, 255]);
        } else {
            out.extend_from_slice(&[heat[0], heat[1], heat[2], 255]);
        }
    }
    out
}

/// Result of [`analyze`]: the annotated frame and the density result.
#[wasm_bindgen]
pub struct Analysis {
    rgba: Vec<u8>,
    json: String,
    density: f64,
}

#[wasm_bindgen]
impl Analysis {
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn json(&self) -> String {
        self.json.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn density(&self) -> f64 {
        self.density
    }
}

/// Runs the full pipeline with the built-in intensity model.
#[wasm_bindgen]
pub fn analyze(seed: u32, index: u32, width: u32, height: u32, threshold: f64) -> Result<Analysis, String> {
    let f = frame(seed, index, width, height);
    let result = analyze_frame(&f, model(), &config(threshold)).map_err(|e| e.to_string())?;
    let annotated = annotate(&f, &result).map_err(|e| e.to_string())?;
    Ok(Analysis {
        rgba: rgba(&annotated),
        json: serde_json::to_string_pretty(&result).map_err(|e| e.to_string())?,
        density: result.density,
    })
}
