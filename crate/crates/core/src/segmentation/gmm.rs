//! Adaptive per-pixel mixture-of-Gaussians background model.

use serde::{Deserialize, Serialize};

use super::SegmentationError;
use crate::image::GrayImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    /// Components per pixel (K).
    pub components: usize,
    /// Learning rate α in (0, 1].
    pub learning_rate: f64,
    /// Match distance in standard deviations (λ).
    pub match_threshold: f64,
    /// Cumulative weight T defining the background components.
    pub background_ratio: f64,
    pub initial_variance: f64,
    pub variance_floor: f64,
    /// Weight given to a component spawned on a miss.
    pub low_weight: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            components: 3,
            learning_rate: 0.05,
            match_threshold: 2.5,
            background_ratio: 0.8,
            initial_variance: 225.0,
            variance_floor: 4.0,
            low_weight: 0.05,
        }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<(), SegmentationError> {
        let bad = |msg: String| Err(SegmentationError::Config(msg));
        if self.components < 1 {
            return bad(format!("components must be >= 1, got {}", self.components));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!(
                "learning_rate must be in (0, 1], got {}",
                self.learning_rate
            ));
        }
        if !(self.match_threshold > 0.0) {
            return bad(format!("match_threshold must be > 0, got {}", self.match_threshold));
        }
        if !(self.background_ratio > 0.0 && self.background_ratio <= 1.0) {
            return bad(format!(
                "background_ratio must be in (0, 1], got {}",
                self.background_ratio
            ));
        }
        if !(self.variance_floor > 0.0) || !(self.initial_variance >= self.variance_floor) {
            return bad(format!(
                "need 0 < variance_floor <= initial_variance, got {} and {}",
                self.variance_floor, self.initial_variance
            ));
        }
        if !(self.low_weight > 0.0 && self.low_weight <= 1.0) {
            return bad(format!("low_weight must be in (0, 1], got {}", self.low_weight));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

impl GaussianComponent {
    fn rank(&self) -> f64 {
        self.weight / self.variance.sqrt()
    }
}

/// K components per pixel, stored contiguously and kept sorted by
/// `weight / sqrt(variance)` descending.
#[derive(Debug, Clone)]
pub struct BackgroundModel {
    width: usize,
    height: usize,
    config: GmmConfig,
    components: Vec<GaussianComponent>,
}

impl BackgroundModel {
    pub fn new(width: usize, height: usize, config: GmmConfig) -> Result<Self, SegmentationError> {
        config.validate()?;
        if width == 0 || height == 0 {
            return Err(SegmentationError::Config(format!(
                "background model needs positive dimensions, got {width}x{height}"
            )));
        }
        let k = config.components;
        let mut components = Vec::with_capacity(width * height * k);
        for _ in 0..width * height {
            components.push(GaussianComponent {
                weight: 1.0,
                mean: 0.0,
                variance: config.initial_variance,
            });
            for _ in 1..k {
                components.push(GaussianComponent {
                    weight: 0.0,
                    mean: 0.0,
                    variance: config.initial_variance,
                });
            }
        }
        Ok(Self {
            width,
            height,
            config,
            components,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn config(&self) -> &GmmConfig {
        &self.config
    }

    /// Components of pixel `(x, y)` in rank order.
    pub fn pixel_components(&self, x: usize, y: usize) -> &[GaussianComponent] {
        let k = self.config.components;
        let i = (y * self.width + x) * k;
        &self.components[i..i + k]
    }

    /// Weighted mean of all components of one pixel.
    pub fn mixture_mean(&self, x: usize, y: usize) -> f64 {
        self.pixel_components(x, y)
            .iter()
            .map(|c| c.weight * c.mean)
            .sum()
    }

    pub fn update(&mut self, image: &GrayImage) -> Result<(), SegmentationError> {
        if image.width() != self.width || image.height() != self.height {
            return Err(SegmentationError::DimensionMismatch {
                expected: (self.width, self.height),
                got: (image.width(), image.height()),
            });
        }
        let k = self.config.components;
        let config = &self.config;
        for (pixel, &value) in self
            .components
            .chunks_exact_mut(k)
            .zip(image.data().iter())
        {
            update_pixel(pixel, value as f64, config);
        }
        Ok(())
    }

    /// Per pixel, the mean of the top component among the first B components
    /// whose cumulative weight exceeds the background ratio.
    pub fn background_image(&self) -> GrayImage {
        let k = self.config.components;
        let ratio = self.config.background_ratio;
        let data = self
            .components
            .chunks_exact(k)
            .map(|pixel| {
                let mut cumulative = 0.0;
                let mut count = pixel.len();
                for (i, c) in pixel.iter().enumerate() {
                    cumulative += c.weight;
                    if cumulative > ratio {
                        count = i + 1;
                        break;
                    }
                }
                // components are rank-sorted, so the best of the first `count` is the first
                let best = pixel[..count]
                    .iter()
                    .fold(&pixel[0], |best, c| if c.rank() > best.rank() { c } else { best });
                best.mean.round().clamp(0.0, 255.0) as u8
            })
            .collect();
        GrayImage::new(self.width, self.height, data).expect("model dimensions are valid")
    }
}

fn update_pixel(pixel: &mut [GaussianComponent], x: f64, config: &GmmConfig) {
    let alpha = config.learning_rate;
    let matched = pixel.iter().position(|c| {
        c.weight > 0.0 && (x - c.mean).abs() <= config.match_threshold * c.variance.sqrt()
    });
    for (i, c) in pixel.iter_mut().enumerate() {
        let hit = if Some(i) == matched { 1.0 } else { 0.0 };
        c.weight = (1.0 - alpha) * c.weight + alpha * hit;
    }
    match matched {
        Some(i) => {
            let c = &mut pixel[i];
            let rho = alpha / c.weight.max(alpha);
            let diff = x - c.mean;
            c.mean += rho * diff;
            c.variance = (c.variance + rho * (diff * diff - c.variance)).max(config.variance_floor);
        }
        None => {
            let last = pixel.len() - 1;
            pixel[last] = GaussianComponent {
                weight: config.low_weight,
                mean: x,
                variance: config.initial_variance,
            };
        }
    }
    let total: f64 = pixel.iter().map(|c| c.weight).sum();
    for c in pixel.iter_mut() {
        c.weight /= total;
    }
    // insertion sort keeps equal-rank components in their previous order
    for i in 1..pixel.len() {
        let mut j = i;
        while j > 0 && pixel[j].rank() > pixel[j - 1].rank() {
            pixel.swap(j, j - 1);
            j -= 1;
        }
    }
}
