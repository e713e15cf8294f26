//! Seeded synthetic microcirculation-like frames and on-disk corpora.
//!
//! Frames are a smooth reddish tissue background with mild noise and a
//! number of darker, thick curved strokes standing in for capillaries.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::image::{write_png, Frame, ImageError};

pub const MANIFEST_FILE: &str = "manifest.json";
const REFERENCE_AREA: f64 = 1920.0 * 1080.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub files: Vec<String>,
}

pub fn frame_id(index: usize) -> String {
    format!("frame_{index:04}")
}

fn frame_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Frame `index` of the corpus identified by `seed`.
pub fn generate_frame(seed: u64, index: usize, width: usize, height: usize) -> Frame {
    assert!(width > 0 && height > 0, "synthetic frame needs positive size");
    let mut rng = frame_rng(seed, index);

    let phase: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));
    let freq: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.5..2.0));
    let mut shade = vec![0f32; width * height];
    for y in 0..height {
        let fy = y as f64 / height as f64;
        for x in 0..width {
            let fx = x as f64 / width as f64;
            let wave = (fx * freq[0] * std::f64::consts::TAU + phase[0]).sin()
                * (fy * freq[1] * std::f64::consts::TAU + phase[1]).cos()
                + 0.5 * ((fx * freq[2] + fy * freq[3]) * std::f64::consts::TAU + phase[2]).sin();
            shade[y * width + x] = (wave * 12.0) as f32;
        }
    }

    // darkness in [0, 1] of the capillary strokes at each pixel
    let mut ink = vec![0f32; width * height];
    let count = ((18.0 * (width * height) as f64 / REFERENCE_AREA).round() as usize).max(2);
    for _ in 0..count {
        let thickness = rng.random_range(2.5f64..5.0);
        let length = rng.random_range(30.0f64..90.0);
        let x0 = rng.random_range(0.0..width as f64);
        let y0 = rng.random_range(0.0..height as f64);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let bend = rng.random_range(-0.6f64..0.6) * length;
        let strength = rng.random_range(0.6f32..1.0);
        let (x2, y2) = (x0 + length * angle.cos(), y0 + length * angle.sin());
        let (cx, cy) = (
            (x0 + x2) / 2.0 - bend * angle.sin(),
            (y0 + y2) / 2.0 + bend * angle.cos(),
        );
        let steps = (length * 2.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let u = 1.0 - t;
            let px = u * u * x0 + 2.0 * u * t * cx + t * t * x2;
            let py = u * u * y0 + 2.0 * u * t * cy + t * t * y2;
            stamp_disc(&mut ink, width, height, px, py, thickness, strength);
        }
    }

    let mut data = Vec::with_capacity(width * height * 3);
    for (s, k) in shade.iter().zip(&ink) {
        let noise = rng.random_range(-2.0f32..2.0);
        let tissue = [205.0 + s, 120.0 + s * 0.6, 110.0 + s * 0.5];
        let vessel = [115.0, 35.0, 45.0];
        for c in 0..3 {
            let v = tissue[c] * (1.0 - k) + vessel[c] * k + noise;
            data.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Frame::new(frame_id(index), width, height, 3, data).expect("synthetic frame shape")
}

fn stamp_disc(ink: &mut [f32], width: usize, height: usize, cx: f64, cy: f64, radius: f64, strength: f32) {
    let x_lo = (cx - radius).floor().max(0.0) as usize;
    let y_lo = (cy - radius).floor().max(0.0) as usize;
    let x_hi = ((cx + radius).ceil() as isize).min(width as isize - 1);
    let y_hi = ((cy + radius).ceil() as isize).min(height as isize - 1);
    if x_hi < 0 || y_hi < 0 {
        return;
    }
    for y in y_lo..=y_hi as usize {
        for x in x_lo..=x_hi as usize {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            // soft edge over one pixel
            let cover = (radius + 0.5 - d).clamp(0.0, 1.0) as f32 * strength;
            let cell = &mut ink[y * width + x];
            *cell = cell.max(cover);
        }
    }
}

pub fn generate_corpus(seed: u64, count: usize, width: usize, height: usize) -> Vec<Frame> {
    (0..count).map(|i| generate_frame(seed, i, width, height)).collect()
}

/// Writes `count` PNG frames plus `manifest.json` into `dir`.
pub fn write_corpus(
    dir: impl AsRef<Path>,
    seed: u64,
    count: usize,
    width: usize,
    height: usize,
) -> Result<CorpusManifest, ImageError> {
    let dir = dir.as_ref();
    let io_err = |source| ImageError::Io {
        path: dir.display().to_string(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let mut files = Vec::with_capacity(count);
    for i in 0..count {
        let frame = generate_frame(seed, i, width, height);
        let name = format!("{}.png", frame.id());
        write_png(&frame, &dir.join(&name))?;
        files.push(name);
    }
    let manifest = CorpusManifest {
        seed,
        count,
        width,
        height,
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join(MANIFEST_FILE), json).map_err(io_err)?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Option<CorpusManifest> {
    let text = std::fs::read_to_string(dir.as_ref().join(MANIFEST_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Paths of the manifest's frames, if every one exists.
pub fn corpus_paths(dir: impl AsRef<Path>, manifest: &CorpusManifest) -> Option<Vec<PathBuf>> {
    let paths: Vec<PathBuf> = manifest.files.iter().map(|f| dir.as_ref().join(f)).collect();
    paths.iter().all(|p| p.is_file()).then_some(paths)
}
