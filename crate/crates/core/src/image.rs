//! Frames, grayscale planes, masks and per-frame results, plus raster I/O.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("cannot decode {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("invalid image: {0}")]
    Invalid(String),
}

/// A raw 8-bit frame, 1 or 3 interleaved channels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    id: String,
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(
        id: impl Into<String>,
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<u8>,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Invalid(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::Invalid(format!(
                "frame must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(ImageError::Invalid(format!(
                "frame data has {} bytes, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        Ok(Self {
            id: id.into(),
            width,
            height,
            channels,
            data,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Samples of pixel `(x, y)`; one or three bytes.
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Expands to three channels, replicating the plane of a gray frame.
    pub fn to_rgb(&self) -> Frame {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Frame {
            id: self.id.clone(),
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }
}

/// Single 8-bit luminance plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(ImageError::Invalid(format!(
                "gray image {width}x{height} with {} samples",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "empty gray image");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "empty gray image");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

/// Axis-aligned pixel rectangle, top-left anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoundingBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.x + self.w <= width && self.y + self.h <= height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.w && y < self.y + self.h
    }
}

/// Row-major bitmap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height, "mask size mismatch");
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Set pixels with at least one unset or out-of-bounds 4-neighbour.
    pub fn is_contour(&self, x: usize, y: usize) -> bool {
        if !self.get(x, y) {
            return false;
        }
        x == 0
            || y == 0
            || x + 1 == self.width
            || y + 1 == self.height
            || !self.get(x - 1, y)
            || !self.get(x + 1, y)
            || !self.get(x, y - 1)
            || !self.get(x, y + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "capillary")]
    Capillary,
    #[serde(rename = "not-capillary")]
    NotCapillary,
}

/// One classified region as reported for a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionResult {
    #[serde(flatten)]
    pub bbox: BoundingBox,
    pub label: Label,
    pub confidence: f32,
    /// Region mask over the bbox extent; kept in memory for annotation only.
    #[serde(skip)]
    pub mask: Option<BinaryMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityResult {
    pub frame_id: String,
    pub density: f64,
    pub elapsed_s: f64,
    pub regions: Vec<RegionResult>,
}

impl DensityResult {
    /// Equality on everything except the wall-clock field.
    pub fn same_outcome(&self, other: &DensityResult) -> bool {
        self.frame_id == other.frame_id
            && self.density.to_bits() == other.density.to_bits()
            && self.regions == other.regions
    }
}

/// BT.601 luma, `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn to_grayscale(frame: &Frame) -> GrayImage {
    let data = match frame.channels {
        1 => frame.data.clone(),
        _ => frame
            .data
            .chunks_exact(3)
            .map(|p| {
                // exact rational form of the weights; ties round up like f64::round
                let weighted = 299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32;
                ((weighted + 500) / 1000) as u8
            })
            .collect(),
    };
    GrayImage {
        width: frame.width,
        height: frame.height,
        data,
    }
}

/// Decodes a PNG or binary PGM/PPM. The frame id is the file stem.
pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame, ImageError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| ImageError::Io {
        path: display.clone(),
        source,
    })?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| ImageError::Format {
        path: display.clone(),
        reason: e.to_string(),
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| display.clone());
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        image::DynamicImage::ImageLuma8(buf) => Frame::new(id, width, height, 1, buf.into_raw()),
        other => Frame::new(id, width, height, 3, other.to_rgb8().into_raw()),
    }
}

const GREEN: [u8; 3] = [0, 255, 0];
const BLACK: [u8; 3] = [0, 0, 0];

/// Draws capillary regions onto an RGB copy of the frame: black mask
/// contours first, then a 1-px green bbox border on top.
pub fn annotate(frame: &Frame, result: &DensityResult) -> Result<Frame, ImageError> {
    let mut out = frame.to_rgb();
    let width = out.width;
    for region in &result.regions {
        if region.label != Label::Capillary {
            continue;
        }
        let b = region.bbox;
        if !b.fits_within(out.width, out.height) {
            return Err(ImageError::Invalid(format!(
                "region {b:?} outside {}x{} frame",
                out.width, out.height
            )));
        }
        let mut paint = |x: usize, y: usize, rgb: [u8; 3]| {
            let i = (y * width + x) * 3;
            out.data[i..i + 3].copy_from_slice(&rgb);
        };
        if let Some(mask) = &region.mask {
            for my in 0..mask.height() {
                for mx in 0..mask.width() {
                    if mask.is_contour(mx, my) {
                        paint(b.x + mx, b.y + my, BLACK);
                    }
                }
            }
        }
        for x in b.x..b.x + b.w {
            paint(x, b.y, GREEN);
            paint(x, b.y + b.h - 1, GREEN);
        }
        for y in b.y..b.y + b.h {
            paint(b.x, y, GREEN);
            paint(b.x + b.w - 1, y, GREEN);
        }
    }
    Ok(out)
}

/// Writes [`annotate`]'s output as an RGB PNG.
pub fn save_annotated(
    frame: &Frame,
    result: &DensityResult,
    path: impl AsRef<Path>,
) -> Result<(), ImageError> {
    let path = path.as_ref();
    let annotated = annotate(frame, result)?;
    write_png(&annotated, path)
}

pub fn write_png(frame: &Frame, path: &Path) -> Result<(), ImageError> {
    let color = if frame.channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    let display = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|source| ImageError::Io {
        path: display.clone(),
        source,
    })?;
    let encoder = image::codecs::png::PngEncoder::new(io::BufWriter::new(file));
    image::ImageEncoder::write_image(
        encoder,
        &frame.data,
        frame.width as u32,
        frame.height as u32,
        color,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(source) => ImageError::Io {
            path: display,
            source,
        },
        other => ImageError::Format {
            path: display,
            reason: other.to_string(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb1(r: u8, g: u8, b: u8) -> Frame {
        Frame::new("p", 1, 1, 3, vec![r, g, b]).unwrap()
    }

    #[test]
    fn grayscale_examples() {
        assert_eq!(to_grayscale(&rgb1(255, 255, 255)).data(), &[255]);
        assert_eq!(to_grayscale(&rgb1(0, 0, 0)).data(), &[0]);
        // 0.299 * 255 = 76.245
        assert_eq!(to_grayscale(&rgb1(255, 0, 0)).data(), &[76]);
    }

    #[test]
    fn grayscale_matches_float_formula() {
        for r in (0..=255).step_by(5) {
            for g in (0..=255).step_by(15) {
                for b in (0..=255).step_by(17) {
                    let luma = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
                    // exact .5 ties can land a hair below in binary floating point
                    let expect = if (luma.fract() - 0.5).abs() < 1e-9 { luma.ceil() } else { luma.round() };
                    let got = to_grayscale(&rgb1(r as u8, g as u8, b as u8)).data()[0];
                    assert_eq!(got as f64, expect, "rgb({r},{g},{b})");
                }
            }
        }
    }

    #[test]
    fn grayscale_passes_single_channel_through() {
        let f = Frame::new("g", 2, 2, 1, vec![1, 2, 3, 4]).unwrap();
        let g = to_grayscale(&f);
        assert_eq!(g.data(), &[1, 2, 3, 4]);
        let again = Frame::new("g", 2, 2, 1, g.data().to_vec()).unwrap();
        assert_eq!(to_grayscale(&again), g);
    }

    #[test]
    fn frame_rejects_bad_shapes() {
        assert!(Frame::new("x", 0, 1, 3, vec![]).is_err());
        assert!(Frame::new("x", 2, 2, 3, vec![0; 11]).is_err());
        assert!(Frame::new("x", 1, 1, 4, vec![0; 4]).is_err());
    }

    #[test]
    fn load_png_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.png");
        let f = Frame::new("two", 2, 2, 3, (0..12).collect()).unwrap();
        write_png(&f, &path).unwrap();
        let loaded = load_frame(&path).unwrap();
        assert_eq!(loaded, f);

        let missing = load_frame(dir.path().join("nope.png"));
        assert!(matches!(missing, Err(ImageError::Io { .. })));

        let bytes = std::fs::read(&path).unwrap();
        let truncated = dir.path().join("cut.png");
        std::fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_frame(&truncated),
            Err(ImageError::Format { .. })
        ));
    }

    #[test]
    fn load_binary_pnm() {
        let dir = tempfile::tempdir().unwrap();
        let pgm = dir.path().join("g.pgm");
        let mut bytes = b"P5\n2 1\n255\n".to_vec();
        bytes.extend([10, 200]);
        std::fs::write(&pgm, bytes).unwrap();
        let f = load_frame(&pgm).unwrap();
        assert_eq!((f.width(), f.height(), f.channels()), (2, 1, 1));
        assert_eq!(f.data(), &[10, 200]);

        let ppm = dir.path().join("c.ppm");
        let mut bytes = b"P6\n1 1\n255\n".to_vec();
        bytes.extend([1, 2, 3]);
        std::fs::write(&ppm, bytes).unwrap();
        let f = load_frame(&ppm).unwrap();
        assert_eq!(f.id(), "c");
        assert_eq!(f.data(), &[1, 2, 3]);
    }

    fn result_with(regions: Vec<RegionResult>) -> DensityResult {
        DensityResult {
            frame_id: "f".into(),
            density: 0.0,
            elapsed_s: 0.0,
            regions,
        }
    }

    fn gray_frame() -> Frame {
        Frame::new("f", 6, 5, 3, (0..90).map(|v| (v * 2 + 1) as u8).collect()).unwrap()
    }

    #[test]
    fn annotate_nothing_is_identity() {
        let f = gray_frame();
        assert_eq!(annotate(&f, &result_with(vec![])).unwrap(), f);
        let not_cap = RegionResult {
            bbox: BoundingBox::new(1, 1, 3, 3),
            label: Label::NotCapillary,
            confidence: 0.9,
            mask: Some(BinaryMask::from_bits(3, 3, vec![true; 9])),
        };
        assert_eq!(annotate(&f, &result_with(vec![not_cap])).unwrap(), f);
    }

    #[test]
    fn annotate_box_border_is_green() {
        let f = gray_frame();
        let region = RegionResult {
            bbox: BoundingBox::new(0, 0, 3, 3),
            label: Label::Capillary,
            confidence: 0.8,
            mask: Some(BinaryMask::from_bits(3, 3, vec![true; 9])),
        };
        let out = annotate(&f, &result_with(vec![region])).unwrap();
        // enumerate the border of (0,0,3,3) independently
        let mut border = vec![];
        for y in 0..3 {
            for x in 0..3 {
                if x == 0 || y == 0 || x == 2 || y == 2 {
                    border.push((x, y));
                }
            }
        }
        assert_eq!(border.len(), 8);
        let mut green = 0;
        for y in 0..f.height() {
            for x in 0..f.width() {
                if out.pixel(x, y) == GREEN {
                    assert!(border.contains(&(x, y)));
                    green += 1;
                } else {
                    assert_eq!(out.pixel(x, y), f.pixel(x, y));
                }
            }
        }
        assert_eq!(green, 8);
    }

    #[test]
    fn annotate_draws_mask_contour_black() {
        let f = Frame::new("f", 7, 7, 3, vec![200; 147]).unwrap();
        let mut mask = BinaryMask::empty(5, 5);
        for y in 0..5 {
            for x in 0..5 {
                mask.set(x, y, true);
            }
        }
        mask.set(0, 0, false);
        let region = RegionResult {
            bbox: BoundingBox::new(1, 1, 5, 5),
            label: Label::Capillary,
            confidence: 1.0,
            mask: Some(mask),
        };
        let out = annotate(&f, &result_with(vec![region])).unwrap();
        // (2,2) in frame = mask (1,1): its up neighbour (1,0) is set, left (0,1) set,
        // but diagonal (0,0) is unset which does not count for 4-connectivity.
        assert_eq!(out.pixel(2, 2), &[200, 200, 200]);
        // interior pixel away from border
        assert_eq!(out.pixel(3, 3), &[200, 200, 200]);
        // bbox border wins over contour
        assert_eq!(out.pixel(1, 3), GREEN);
        assert_eq!(out.pixel(0, 0), &[200, 200, 200]);
    }

    #[test]
    fn save_then_load_differs_only_at_drawn_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let f = gray_frame();
        let region = RegionResult {
            bbox: BoundingBox::new(2, 1, 4, 3),
            label: Label::Capillary,
            confidence: 0.7,
            mask: None,
        };
        let path = dir.path().join("out.png");
        save_annotated(&f, &result_with(vec![region]), &path).unwrap();
        let back = load_frame(&path).unwrap();
        for y in 0..f.height() {
            for x in 0..f.width() {
                if back.pixel(x, y) != f.pixel(x, y) {
                    assert!(region_border(x, y));
                }
            }
        }
        fn region_border(x: usize, y: usize) -> bool {
            (2..6).contains(&x) && (1..4).contains(&y) && (x == 2 || x == 5 || y == 1 || y == 3)
        }
    }

    #[test]
    fn save_to_unwritable_path_is_io_error() {
        let f = gray_frame();
        let err = save_annotated(&f, &result_with(vec![]), "/nonexistent-dir/x.png");
        assert!(matches!(err, Err(ImageError::Io { .. })));
    }

    #[test]
    fn density_result_json_shape() {
        let r = result_with(vec![RegionResult {
            bbox: BoundingBox::new(1, 2, 3, 4),
            label: Label::NotCapillary,
            confidence: 0.5,
            mask: None,
        }]);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(
            v,
            serde_json::json!({
                "frame_id": "f", "density": 0.0, "elapsed_s": 0.0,
                "regions": [{"x": 1, "y": 2, "w": 3, "h": 4, "label": "not-capillary", "confidence": 0.5}]
            })
        );
    }
}
