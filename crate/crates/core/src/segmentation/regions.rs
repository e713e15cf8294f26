use super::ssim::SimilarityMap;
use crate::image::{BinaryMask, BoundingBox};

/// A connected low-similarity area; `mask` covers the bbox extent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateRegion {
    pub bbox: BoundingBox,
    pub mask: BinaryMask,
}

impl CandidateRegion {
    pub fn area(&self) -> usize {
        self.mask.count()
    }

    /// Iterates the frame coordinates of every set mask pixel.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let b = self.bbox;
        (0..b.h).flat_map(move |y| {
            (0..b.w).filter_map(move |x| self.mask.get(x, y).then_some((b.x + x, b.y + y)))
        })
    }
}

/// Pixels whose similarity is strictly below `threshold`.
pub fn candidate_mask(sim: &SimilarityMap, threshold: f64) -> BinaryMask {
    let bits = sim.values().iter().map(|&v| v < threshold).collect();
    BinaryMask::from_bits(sim.width(), sim.height(), bits)
}

struct Component {
    first: usize,
    bbox: BoundingBox,
    pixels: Vec<usize>,
}

/// 8-connected components of `mask` with at least `min_area` pixels.
///
/// When more than `max_regions` qualify, the largest are kept. Output is
/// sorted by bbox top-left `(y, x)`, then by first pixel in raster order.
pub fn extract_regions(mask: &BinaryMask, min_area: usize, max_regions: usize) -> Vec<CandidateRegion> {
    let min_area = min_area.max(1);
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut visited = vec![false; w * h];
    let mut stack = Vec::new();
    let mut components = Vec::new();

    for start in 0..w * h {
        if !bits[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(p) = stack.pop() {
            pixels.push(p);
            let (px, py) = (p % w, p / w);
            x0 = x0.min(px);
            y0 = y0.min(py);
            x1 = x1.max(px);
            y1 = y1.max(py);
            for ny in py.saturating_sub(1)..=(py + 1).min(h - 1) {
                for nx in px.saturating_sub(1)..=(px + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if bits[q] && !visited[q] {
                        visited[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        if pixels.len() >= min_area {
            components.push(Component {
                first: start,
                bbox: BoundingBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
                pixels,
            });
        }
    }

    let order = |c: &Component| (c.bbox.y, c.bbox.x, c.first);
    if components.len() > max_regions {
        components.sort_by(|a, b| b.pixels.len().cmp(&a.pixels.len()).then(order(a).cmp(&order(b))));
        components.truncate(max_regions);
    }
    components.sort_by_key(order);

    components
        .into_iter()
        .map(|c| {
            let b = c.bbox;
            let mut region_mask = BinaryMask::empty(b.w, b.h);
            for p in c.pixels {
                region_mask.set(p % w - b.x, p / w - b.y, true);
            }
            CandidateRegion {
                bbox: b,
                mask: region_mask,
            }
        })
        .collect()
}
