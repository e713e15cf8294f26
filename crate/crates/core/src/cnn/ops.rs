//! Layer kernels. Activations are `H × W × C`, conv kernels `k × k × C × F`,
//! dense weights `N × M`.

use super::{CnnError, Tensor};

fn shape_err(msg: String) -> CnnError {
    CnnError::Shape(msg)
}

/// Valid-padding, stride-1 convolution.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor, CnnError> {
    let &[h, w, c] = input.dims() else {
        return Err(shape_err(format!("conv2d input must be HxWxC, got {:?}", input.dims())));
    };
    let &[kh, kw, kc, f] = kernels.dims() else {
        return Err(shape_err(format!("conv2d kernels must be kxkxCxF, got {:?}", kernels.dims())));
    };
    if kc != c {
        return Err(shape_err(format!("conv2d channel mismatch: input {c}, kernels {kc}")));
    }
    if kh > h || kw > w || kh == 0 || kw == 0 {
        return Err(shape_err(format!("conv2d kernel {kh}x{kw} does not fit input {h}x{w}")));
    }
    if bias.dims() != [f] {
        return Err(shape_err(format!("conv2d bias must be [{f}], got {:?}", bias.dims())));
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let src = input.data();
    let kern = kernels.data();
    let mut out = vec![0f32; oh * ow * f];
    for y in 0..oh {
        for x in 0..ow {
            let acc = &mut out[(y * ow + x) * f..(y * ow + x + 1) * f];
            acc.copy_from_slice(bias.data());
            for dy in 0..kh {
                for dx in 0..kw {
                    let pix = &src[((y + dy) * w + x + dx) * c..((y + dy) * w + x + dx + 1) * c];
                    let taps = &kern[(dy * kw + dx) * c * f..(dy * kw + dx + 1) * c * f];
                    for (&v, row) in pix.iter().zip(taps.chunks_exact(f)) {
                        for (a, &k) in acc.iter_mut().zip(row) {
                            *a += v * k;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, f], out)
}

/// 2×2 max pooling with stride 2; a trailing odd row or column is dropped.
pub fn maxpool2d(input: &Tensor) -> Result<Tensor, CnnError> {
    let &[h, w, c] = input.dims() else {
        return Err(shape_err(format!("maxpool2d input must be HxWxC, got {:?}", input.dims())));
    };
    if h < 2 || w < 2 {
        return Err(shape_err(format!("maxpool2d needs at least 2x2, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        for x in 0..ow {
            let at = |yy: usize, xx: usize| &src[(yy * w + xx) * c..(yy * w + xx + 1) * c];
            let (a, b) = (at(2 * y, 2 * x), at(2 * y, 2 * x + 1));
            let (d, e) = (at(2 * y + 1, 2 * x), at(2 * y + 1, 2 * x + 1));
            for ch in 0..c {
                out.push(a[ch].max(b[ch]).max(d[ch]).max(e[ch]));
            }
        }
    }
    Tensor::new(vec![oh, ow, c], out)
}

/// Fully connected layer: `out[j] = bias[j] + Σ_i input[i]·weights[i, j]`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, CnnError> {
    let &[n, m] = weights.dims() else {
        return Err(shape_err(format!("dense weights must be NxM, got {:?}", weights.dims())));
    };
    if input.rank() != 1 || input.len() != n {
        return Err(shape_err(format!("dense expects input [{n}], got {:?}", input.dims())));
    }
    if bias.dims() != [m] {
        return Err(shape_err(format!("dense bias must be [{m}], got {:?}", bias.dims())));
    }
    let mut out = bias.data().to_vec();
    for (&v, row) in input.data().iter().zip(weights.data().chunks_exact(m)) {
        for (o, &wt) in out.iter_mut().zip(row) {
            *o += v * wt;
        }
    }
    Ok(Tensor::from_vec(out))
}

pub fn relu(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Max-shifted softmax over all elements, returned as a rank-1 tensor.
pub fn softmax(t: &Tensor) -> Tensor {
    let max = t.data().iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = t.data().iter().map(|&v| ((v - max) as f64).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Tensor::from_vec(exps.iter().map(|e| (e / sum) as f32).collect())
}
