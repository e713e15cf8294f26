use crate::image::GrayImage;

/// Normalized 1-D Gaussian taps, `2 * radius + 1` long, σ = radius / 2.
pub fn gaussian_kernel(radius: usize) -> Vec<f32> {
    let sigma = radius as f64 / 2.0;
    let taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter().map(|t| (t / sum) as f32).collect()
}

/// Single-still background estimate: separable Gaussian blur with
/// clamp-to-edge borders.
///
/// # Panics
/// If `kernel_radius` is zero.
pub fn estimate_background_static(image: &GrayImage, kernel_radius: usize) -> GrayImage {
    assert!(kernel_radius >= 1, "kernel radius must be at least 1");
    let (w, h) = (image.width(), image.height());
    let kernel = gaussian_kernel(kernel_radius);
    let r = kernel_radius as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    // horizontal pass into f32, with a padded row so the inner loop has no branches
    let mut horizontal = vec![0f32; w * h];
    let mut padded = vec![0f32; w + 2 * kernel_radius];
    for y in 0..h {
        let row = image.row(y);
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[clamp(i as isize - r, w)] as f32;
        }
        let out = &mut horizontal[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            *o = padded[x..x + kernel.len()]
                .iter()
                .zip(&kernel)
                .map(|(p, k)| p * k)
                .sum();
        }
    }

    // vertical pass, accumulating whole rows at a time
    let mut data = Vec::with_capacity(w * h);
    let mut acc = vec![0f32; w];
    for y in 0..h {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (i, &k) in kernel.iter().enumerate() {
            let src = clamp(y as isize + i as isize - r, h);
            let row = &horizontal[src * w..(src + 1) * w];
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += k * v;
            }
        }
        data.extend(acc.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
    }
    GrayImage::new(w, h, data).expect("dimensions preserved")
}
