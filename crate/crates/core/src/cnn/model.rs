use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ops::{conv2d, dense, maxpool2d, relu, softmax};
use super::{CnnError, Tensor};
use crate::image::Label;

pub const PAPER_CONV_FILTERS: [usize; 3] = [32, 64, 128];
pub const PAPER_DENSE_UNITS: [usize; 3] = [128, 64, 2];
pub const DEFAULT_INPUT_SIZE: usize = 64;
/// Brightness cut used by [`intensity_model`] on the synthetic corpus.
pub const DEFAULT_INTENSITY_THRESHOLD: f32 = 0.55;
const KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d { kernels: Tensor, bias: Tensor },
    MaxPool2d,
    Flatten,
    Dense { weights: Tensor, bias: Tensor },
    Relu,
    Softmax,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv2d",
            Layer::MaxPool2d => "maxpool2d",
            Layer::Flatten => "flatten",
            Layer::Dense { .. } => "dense",
            Layer::Relu => "relu",
            Layer::Softmax => "softmax",
        }
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, CnnError> {
        let err = |msg: String| Err(CnnError::Shape(format!("{}: {msg}", self.kind())));
        match self {
            Layer::Conv2d { kernels, bias } => {
                let (&[h, w, c], &[kh, kw, kc, f]) = (input, kernels.dims()) else {
                    return err(format!("input {input:?} / kernels {:?}", kernels.dims()));
                };
                if kc != c || bias.dims() != [f] {
                    return err(format!("kernels {:?} and bias {:?} do not fit input {input:?}", kernels.dims(), bias.dims()));
                }
                if kh > h || kw > w {
                    return err(format!("kernel {kh}x{kw} larger than input {h}x{w}"));
                }
                Ok(vec![h - kh + 1, w - kw + 1, f])
            }
            Layer::MaxPool2d => match *input {
                [h, w, c] if h >= 2 && w >= 2 => Ok(vec![h / 2, w / 2, c]),
                _ => err(format!("input {input:?} too small to pool")),
            },
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Dense { weights, bias } => match (input, weights.dims()) {
                (&[n], &[wn, m]) if wn == n && bias.dims() == [m] => Ok(vec![m]),
                _ => err(format!("weights {:?} / bias {:?} do not fit input {input:?}", weights.dims(), bias.dims())),
            },
            Layer::Relu => Ok(input.to_vec()),
            Layer::Softmax => match input {
                [n] if *n >= 1 => Ok(input.to_vec()),
                _ => err(format!("expects a vector, got {input:?}")),
            },
        }
    }

    fn apply(&self, input: &Tensor) -> Result<Tensor, CnnError> {
        match self {
            Layer::Conv2d { kernels, bias } => conv2d(input, kernels, bias),
            Layer::MaxPool2d => maxpool2d(input),
            Layer::Flatten => Ok(Tensor::from_vec(input.data().to_vec())),
            Layer::Dense { weights, bias } => dense(input, weights, bias),
            Layer::Relu => Ok(relu(input)),
            Layer::Softmax => Ok(softmax(input)),
        }
    }

    fn params_finite(&self) -> bool {
        match self {
            Layer::Conv2d { kernels, bias } => kernels.is_finite() && bias.is_finite(),
            Layer::Dense { weights, bias } => weights.is_finite() && bias.is_finite(),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelLayer {
    pub layer: Layer,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
}

/// A validated layer chain producing two class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    input_shape: Vec<usize>,
    layers: Vec<ModelLayer>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: Label,
    pub confidence: f32,
}

impl CnnModel {
    pub fn from_layers(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self, CnnError> {
        if input_shape.len() != 3 || input_shape.contains(&0) {
            return Err(CnnError::Config(format!("input shape must be HxWxC, got {input_shape:?}")));
        }
        let mut shape = input_shape.clone();
        let mut chained = Vec::with_capacity(layers.len());
        for layer in layers {
            if !layer.params_finite() {
                return Err(CnnError::Config(format!("{} has non-finite parameters", layer.kind())));
            }
            let out = layer.output_shape(&shape)?;
            if out.contains(&0) {
                return Err(CnnError::Config(format!(
                    "{} collapses shape {shape:?} to {out:?}",
                    layer.kind()
                )));
            }
            chained.push(ModelLayer {
                layer,
                input_shape: std::mem::replace(&mut shape, out.clone()),
                output_shape: out,
            });
        }
        if shape != [2] {
            return Err(CnnError::Config(format!("model must end in 2 outputs, got {shape:?}")));
        }
        Ok(Self {
            input_shape,
            layers: chained,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Side length of the square input patch.
    pub fn input_size(&self) -> usize {
        self.input_shape[0]
    }

    pub fn layers(&self) -> &[ModelLayer] {
        &self.layers
    }

    /// Runs every layer in order; the result sums to 1.
    pub fn forward(&self, patch: &Tensor) -> Result<Tensor, CnnError> {
        if patch.dims() != self.input_shape.as_slice() {
            return Err(CnnError::Shape(format!(
                "patch shape {:?} does not match model input {:?}",
                patch.dims(),
                self.input_shape
            )));
        }
        let mut layers = self.layers.iter();
        let first = layers.next().expect("model has layers");
        let mut x = first.layer.apply(patch)?;
        for l in layers {
            x = l.layer.apply(&x)?;
        }
        Ok(x)
    }

    pub fn classify_patch(&self, patch: &Tensor) -> Result<Classification, CnnError> {
        let probs = self.forward(patch)?;
        Ok(classify_probabilities(probs.data()))
    }

    /// Named parameter tensors in file order: `conv1.kernel`, `conv1.bias`, …, `dense1.kernel`, ….
    pub fn named_parameters(&self) -> Vec<(String, &Tensor)> {
        let (mut conv, mut fc) = (0, 0);
        let mut out = Vec::new();
        for l in &self.layers {
            match &l.layer {
                Layer::Conv2d { kernels, bias } => {
                    conv += 1;
                    out.push((format!("conv{conv}.kernel"), kernels));
                    out.push((format!("conv{conv}.bias"), bias));
                }
                Layer::Dense { weights, bias } => {
                    fc += 1;
                    out.push((format!("dense{fc}.kernel"), weights));
                    out.push((format!("dense{fc}.bias"), bias));
                }
                _ => {}
            }
        }
        out
    }

    /// Model with the given parameter tensors in [`named_parameters`](Self::named_parameters)
    /// order; conv blocks get ReLU + pool, hidden dense layers ReLU, the last softmax.
    pub fn from_parameters(input_shape: Vec<usize>, params: Vec<(String, Tensor)>) -> Result<Self, CnnError> {
        let mut layers = Vec::new();
        let mut iter = params.into_iter();
        let (mut conv, mut fc) = (0, 0);
        let mut flattened = false;
        while let Some((name, first)) = iter.next() {
            let (bias_name, bias) = iter
                .next()
                .ok_or_else(|| CnnError::Format(format!("tensor {name} has no bias record")))?;
            let expect = |prefix: &str, n: usize| (format!("{prefix}{n}.kernel"), format!("{prefix}{n}.bias"));
            if name.starts_with("conv") {
                conv += 1;
                if flattened || (name.clone(), bias_name.clone()) != expect("conv", conv) {
                    return Err(CnnError::Format(format!("unexpected records {name}, {bias_name}")));
                }
                layers.extend([Layer::Conv2d { kernels: first, bias }, Layer::Relu, Layer::MaxPool2d]);
            } else if name.starts_with("dense") {
                fc += 1;
                if (name.clone(), bias_name.clone()) != expect("dense", fc) {
                    return Err(CnnError::Format(format!("unexpected records {name}, {bias_name}")));
                }
                if !flattened {
                    layers.push(Layer::Flatten);
                    flattened = true;
                }
                layers.extend([Layer::Dense { weights: first, bias }, Layer::Relu]);
            } else {
                return Err(CnnError::Format(format!("unknown tensor {name}")));
            }
        }
        match layers.last_mut() {
            Some(last @ Layer::Relu) if flattened => *last = Layer::Softmax,
            _ => return Err(CnnError::Format("weights must end with a dense layer".into())),
        }
        Self::from_layers(input_shape, layers)
    }
}

/// Label is the argmax with index 0 = capillary; exact ties are not-capillary.
pub fn classify_probabilities(probs: &[f32]) -> Classification {
    let (p_cap, p_not) = (probs[0], probs[1]);
    if p_cap > p_not {
        Classification {
            label: Label::Capillary,
            confidence: p_cap,
        }
    } else {
        Classification {
            label: Label::NotCapillary,
            confidence: p_not,
        }
    }
}

/// Conv blocks (3×3 conv, ReLU, 2×2 pool) followed by flatten and dense
/// layers, all parameters zero. `dense_units` must end in 2.
pub fn build_architecture(
    input_size: usize,
    conv_filters: &[usize],
    dense_units: &[usize],
) -> Result<CnnModel, CnnError> {
    build_with(input_size, conv_filters, dense_units, |dims, _| Tensor::zeros(dims))
}

/// 32/64/128-filter conv blocks then dense 128 → 64 → 2, zero-initialized.
pub fn build_paper_architecture(input_size: usize) -> Result<CnnModel, CnnError> {
    build_architecture(input_size, &PAPER_CONV_FILTERS, &PAPER_DENSE_UNITS)
}

/// He-normal weights (`N(0, 1)·√(2 / fan_in)`) drawn from ChaCha8 seeded
/// with `seed`; biases zero.
pub fn random_architecture(
    input_size: usize,
    conv_filters: &[usize],
    dense_units: &[usize],
    seed: u64,
) -> Result<CnnModel, CnnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_with(input_size, conv_filters, dense_units, |dims, fan_in| {
        let scale = (2.0 / fan_in as f64).sqrt();
        let n: usize = dims.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z * scale) as f32
            })
            .collect();
        Tensor::new(dims, data).expect("weight shape")
    })
}

pub fn gen_random_weights(seed: u64) -> CnnModel {
    random_architecture(DEFAULT_INPUT_SIZE, &PAPER_CONV_FILTERS, &PAPER_DENSE_UNITS, seed)
        .expect("default architecture is valid")
}

/// Hand-set weights on the default layer stack that act as a mean-intensity
/// detector: a patch is labelled capillary when its smoothed, max-pooled
/// brightness is below `threshold` (patch values are in [0, 1]).
///
/// Stands in for trained weights where a content-dependent classifier is
/// needed; the compute cost is identical to any other model of this shape.
pub fn intensity_model(input_size: usize, threshold: f32) -> Result<CnnModel, CnnError> {
    const GAIN: f32 = 50.0;
    let base = build_paper_architecture(input_size)?;
    let mut channels = 1;
    let mut dense_index = 0;
    let mut layers = Vec::with_capacity(base.layers().len());
    for l in base.layers() {
        let mut layer = l.layer.clone();
        match &mut layer {
            Layer::Conv2d { kernels, .. } => {
                let d = kernels.dims().to_vec();
                let (taps, c, f) = (d[0] * d[1], d[2], d[3]);
                // filter 0 averages input channel 0 over the window
                for t in 0..taps {
                    kernels.data_mut()[t * c * f] = 1.0 / taps as f32;
                }
                channels = f;
            }
            Layer::Dense { weights, bias } => {
                let (n, m) = (weights.dims()[0], weights.dims()[1]);
                match dense_index {
                    0 => {
                        // unit 0 = mean of channel 0 over every flattened position
                        let positions = n / channels;
                        for p in 0..positions {
                            weights.data_mut()[p * channels * m] = 1.0 / positions as f32;
                        }
                    }
                    1 => weights.data_mut()[0] = 1.0,
                    _ => {
                        weights.data_mut()[0] = -GAIN;
                        bias.data_mut()[0] = GAIN * threshold;
                    }
                }
                dense_index += 1;
            }
            _ => {}
        }
        layers.push(layer);
    }
    CnnModel::from_layers(base.input_shape().to_vec(), layers)
}

fn build_with(
    input_size: usize,
    conv_filters: &[usize],
    dense_units: &[usize],
    mut weights: impl FnMut(Vec<usize>, usize) -> Tensor,
) -> Result<CnnModel, CnnError> {
    if dense_units.last() != Some(&2) {
        return Err(CnnError::Config("last dense layer must have 2 units".into()));
    }
    // walk the shape chain first so a too-small input is a config error, not a shape error
    let mut side = input_size;
    for _ in conv_filters {
        if side < KERNEL {
            return Err(CnnError::Config(format!("input {input_size} too small for the conv stack")));
        }
        side = (side - KERNEL).div_ceil(2);
        if side == 0 {
            return Err(CnnError::Config(format!(
                "input {input_size} collapses to zero after pooling"
            )));
        }
    }
    let mut layers = Vec::new();
    let mut channels = 1;
    for &f in conv_filters {
        let fan_in = KERNEL * KERNEL * channels;
        layers.push(Layer::Conv2d {
            kernels: weights(vec![KERNEL, KERNEL, channels, f], fan_in),
            bias: Tensor::zeros(vec![f]),
        });
        layers.extend([Layer::Relu, Layer::MaxPool2d]);
        channels = f;
    }
    layers.push(Layer::Flatten);
    let mut width = side * side * channels;
    for (i, &units) in dense_units.iter().enumerate() {
        layers.push(Layer::Dense {
            weights: weights(vec![width, units], width),
            bias: Tensor::zeros(vec![units]),
        });
        layers.push(if i + 1 == dense_units.len() { Layer::Softmax } else { Layer::Relu });
        width = units;
    }
    CnnModel::from_layers(vec![input_size, input_size, 1], layers)
}
