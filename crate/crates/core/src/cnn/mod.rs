//! From-scratch inference for the patch classifier.

mod model;
pub mod ops;
mod tensor;
mod weights;

use thiserror::Error;

pub use model::{
    build_architecture, build_paper_architecture, classify_probabilities, gen_random_weights, intensity_model,
    random_architecture, Classification, CnnModel, Layer, ModelLayer, DEFAULT_INPUT_SIZE, DEFAULT_INTENSITY_THRESHOLD,
    PAPER_CONV_FILTERS, PAPER_DENSE_UNITS,
};
pub use ops::{conv2d, dense, maxpool2d, relu, softmax};
pub use tensor::Tensor;
pub use weights::{load_weights, parse_weights, read_weights, save_weights, write_weights, MAGIC};

#[derive(Debug, Error)]
pub enum CnnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("bad weight file: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
