use super::CnnError;

/// Dense row-major `f32` array of rank 1 to 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, CnnError> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(CnnError::Shape(format!("tensor rank must be 1..=4, got {}", dims.len())));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(CnnError::Shape(format!(
                "tensor dims {dims:?} need {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Self::new(dims, vec![0.0; len]).expect("zeros shape")
    }

    pub fn from_vec(data: Vec<f32>) -> Self {
        Self {
            dims: vec![data.len()],
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(self, dims: Vec<usize>) -> Result<Self, CnnError> {
        Self::new(dims, self.data)
    }

    /// Bitwise equality, including dims; distinguishes -0.0 and NaN payloads.
    pub fn bitwise_eq(&self, other: &Tensor) -> bool {
        self.dims == other.dims
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}
