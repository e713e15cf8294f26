use super::SegmentationError;
use crate::image::GrayImage;

pub const DEFAULT_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const DEFAULT_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SimilarityMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height, "similarity map size mismatch");
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// SSIM of one window from its exact integer moments.
///
/// `n` pixels, sums of a, b, a², b² and ab. Variances are population
/// (divide by n).
pub fn ssim_from_sums(n: u64, sa: u64, sb: u64, saa: u64, sbb: u64, sab: u64, c1: f64, c2: f64) -> f64 {
    let nf = n as f64;
    let mu_a = sa as f64 / nf;
    let mu_b = sb as f64 / nf;
    // n·Σx² − (Σx)² is exact in i128, so identical inputs give identical terms
    let n2 = nf * nf;
    let var_a = (n as i128 * saa as i128 - sa as i128 * sa as i128) as f64 / n2;
    let var_b = (n as i128 * sbb as i128 - sb as i128 * sb as i128) as f64 / n2;
    let cov = (n as i128 * sab as i128 - sa as i128 * sb as i128) as f64 / n2;
    let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
    let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
    num / den
}

/// Per-pixel SSIM over a `window × window` uniform window centred on each
/// pixel, clipped to the image at the borders.
pub fn ssim_map(
    a: &GrayImage,
    b: &GrayImage,
    window: usize,
    c1: f64,
    c2: f64,
) -> Result<SimilarityMap, SegmentationError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(SegmentationError::DimensionMismatch {
            expected: (a.width(), a.height()),
            got: (b.width(), b.height()),
        });
    }
    if window < 3 || window.is_multiple_of(2) {
        return Err(SegmentationError::Config(format!(
            "ssim window must be odd and >= 3, got {window}"
        )));
    }
    let (w, h) = (a.width(), a.height());
    let r = window / 2;

    // Column sums over the rows currently inside the vertical window.
    let mut cols = vec![[0u64; 5]; w];
    let add_row = |cols: &mut [[u64; 5]], y: usize, sign: bool| {
        for ((c, &pa), &pb) in cols.iter_mut().zip(a.row(y)).zip(b.row(y)) {
            let (pa, pb) = (pa as u64, pb as u64);
            let terms = [pa, pb, pa * pa, pb * pb, pa * pb];
            for (acc, t) in c.iter_mut().zip(terms) {
                if sign {
                    *acc += t;
                } else {
                    *acc -= t;
                }
            }
        }
    };
    for y in 0..=r.min(h - 1) {
        add_row(&mut cols, y, true);
    }

    let mut prefix = vec![[0u64; 5]; w + 1];
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        if y > 0 {
            if y + r < h {
                add_row(&mut cols, y + r, true);
            }
            if y > r {
                add_row(&mut cols, y - r - 1, false);
            }
        }
        let rows = (y + r).min(h - 1) - y.saturating_sub(r) + 1;
        for x in 0..w {
            for k in 0..5 {
                prefix[x + 1][k] = prefix[x][k] + cols[x][k];
            }
        }
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1) + 1;
            let s: [u64; 5] = std::array::from_fn(|k| prefix[hi][k] - prefix[lo][k]);
            let n = (rows * (hi - lo)) as u64;
            values.push(ssim_from_sums(n, s[0], s[1], s[2], s[3], s[4], c1, c2));
        }
    }
    Ok(SimilarityMap::new(w, h, values))
}
