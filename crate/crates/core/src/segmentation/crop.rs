use super::regions::CandidateRegion;
use super::SegmentationError;
use crate::cnn::Tensor;
use crate::image::GrayImage;

/// Bilinearly resamples the region's bbox to `out_size × out_size`, scaled
/// to [0, 1], shape `(out_size, out_size, 1)`.
///
/// Sample centres are aligned (`src = (i + 0.5)·in/out − 0.5`, clamped), so
/// an equal-size crop is an exact copy.
pub fn crop_patch(
    image: &GrayImage,
    region: &CandidateRegion,
    out_size: usize,
) -> Result<Tensor, SegmentationError> {
    let b = region.bbox;
    if !b.fits_within(image.width(), image.height()) {
        return Err(SegmentationError::DimensionMismatch {
            expected: (image.width(), image.height()),
            got: (b.x + b.w, b.y + b.h),
        });
    }
    if out_size == 0 {
        return Err(SegmentationError::Config("patch size must be positive".into()));
    }
    let xs = sample_positions(b.w, out_size);
    let ys = sample_positions(b.h, out_size);
    let mut data = Vec::with_capacity(out_size * out_size);
    for &(y0, y1, fy) in &ys {
        let row0 = &image.row(b.y + y0)[b.x..b.x + b.w];
        let row1 = &image.row(b.y + y1)[b.x..b.x + b.w];
        for &(x0, x1, fx) in &xs {
            let top = row0[x0] as f32 * (1.0 - fx) + row0[x1] as f32 * fx;
            let bottom = row1[x0] as f32 * (1.0 - fx) + row1[x1] as f32 * fx;
            data.push((top * (1.0 - fy) + bottom * fy) / 255.0);
        }
    }
    Ok(Tensor::new(vec![out_size, out_size, 1], data).expect("patch shape"))
}

/// For each output index: the two source indices and the weight of the second.
fn sample_positions(input: usize, output: usize) -> Vec<(usize, usize, f32)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(input - 1);
            (lo, hi, (src - lo as f64) as f32)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{BinaryMask, BoundingBox};

    fn region(x: usize, y: usize, w: usize, h: usize) -> CandidateRegion {
        CandidateRegion {
            bbox: BoundingBox::new(x, y, w, h),
            mask: BinaryMask::from_bits(w, h, vec![true; w * h]),
        }
    }

    /// Bilinear interpolation written out directly from the coordinate map.
    fn oracle(img: &GrayImage, b: BoundingBox, out: usize) -> Vec<f64> {
        let mut v = vec![];
        for oy in 0..out {
            for ox in 0..out {
                let sx = ((ox as f64 + 0.5) * b.w as f64 / out as f64 - 0.5).max(0.0).min((b.w - 1) as f64);
                let sy = ((oy as f64 + 0.5) * b.h as f64 / out as f64 - 0.5).max(0.0).min((b.h - 1) as f64);
                let (x0, y0) = (sx.floor(), sy.floor());
                let (x1, y1) = ((x0 + 1.0).min((b.w - 1) as f64), (y0 + 1.0).min((b.h - 1) as f64));
                let p = |x: f64, y: f64| img.get(b.x + x as usize, b.y + y as usize) as f64;
                let (ax, ay) = (sx - x0, sy - y0);
                let val = p(x0, y0) * (1.0 - ax) * (1.0 - ay)
                    + p(x1, y0) * ax * (1.0 - ay)
                    + p(x0, y1) * (1.0 - ax) * ay
                    + p(x1, y1) * ax * ay;
                v.push(val / 255.0);
            }
        }
        v
    }

    #[test]
    fn same_size_is_exact_copy() {
        let img = GrayImage::from_fn(70, 66, |x, y| ((x * 7 + y * 13) % 256) as u8);
        let t = crop_patch(&img, &region(3, 1, 64, 64), 64).unwrap();
        assert_eq!(t.dims(), &[64, 64, 1]);
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(t.data()[y * 64 + x], img.get(x + 3, y + 1) as f32 / 255.0);
            }
        }
    }

    #[test]
    fn checkerboard_preserved() {
        let img = GrayImage::new(2, 2, vec![0, 255, 255, 0]).unwrap();
        let t = crop_patch(&img, &region(0, 0, 2, 2), 2).unwrap();
        assert_eq!(t.data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn ramp_downsample_matches_oracle() {
        let img = GrayImage::from_fn(4, 4, |x, y| (x * 20 + y * 60) as u8);
        let b = BoundingBox::new(0, 0, 4, 4);
        let t = crop_patch(&img, &region(0, 0, 4, 4), 2).unwrap();
        for (got, want) in t.data().iter().zip(oracle(&img, b, 2)) {
            assert!((*got as f64 - want).abs() < 1e-6);
        }
    }

    #[test]
    fn random_boxes_match_oracle() {
        let mut s = 99u64;
        let mut next = |m: usize| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 33) as usize % m
        };
        let img = GrayImage::from_fn(40, 30, |x, y| ((x * 31 + y * 17 + x * y) % 256) as u8);
        for _ in 0..120 {
            let (w, h) = (1 + next(20), 1 + next(15));
            let (x, y) = (next(40 - w + 1), next(30 - h + 1));
            let out = 1 + next(12);
            let t = crop_patch(&img, &region(x, y, w, h), out).unwrap();
            for (got, want) in t.data().iter().zip(oracle(&img, BoundingBox::new(x, y, w, h), out)) {
                assert!((*got as f64 - want).abs() < 1e-5, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn box_outside_image() {
        let img = GrayImage::filled(4, 4, 0);
        assert!(matches!(
            crop_patch(&img, &region(2, 2, 3, 1), 4),
            Err(SegmentationError::DimensionMismatch { .. })
        ));
    }
}
