use crate::error::{Error, Result};

/// Channel-last activation tensor with shape `(batch, height, width, channels)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::DimensionMismatch(format!(
                "tensor dims must be >= 1, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "tensor {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn height(&self) -> usize {
        self.shape[1]
    }

    pub fn width(&self) -> usize {
        self.shape[2]
    }

    pub fn channels(&self) -> usize {
        self.shape[3]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Number of spatial positions across the batch.
    pub fn positions(&self) -> usize {
        self.shape[0] * self.shape[1] * self.shape[2]
    }

    #[inline]
    pub fn index(&self, n: usize, y: usize, x: usize, c: usize) -> usize {
        ((n * self.shape[1] + y) * self.shape[2] + x) * self.shape[3] + c
    }

    pub fn get(&self, n: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(n, y, x, c)]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::DimensionMismatch(format!(
                "cannot add {:?} to {:?}",
                other.shape, self.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }
}
