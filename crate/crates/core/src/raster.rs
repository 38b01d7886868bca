//! Raster types shared by every stage of the pipeline.
//!
//! Coordinates follow one convention throughout the crate: `x` is the column,
//! `y` is the row, the origin is the top-left pixel and pixel centers sit on
//! integer coordinates. All buffers are row-major.

use crate::error::{Error, Result};

/// 8-bit RGB image, interleaved row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::DimensionMismatch(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width * 3 {
            return Err(Error::DimensionMismatch(format!(
                "image {height}x{width} needs {} bytes, got {}",
                height * width * 3,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Image with every pixel set to `rgb`.
    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(height * width * 3)
            .collect();
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }
}

/// Per-pixel foreground probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ProbMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::DimensionMismatch(format!(
                "map dimensions must be positive, got {height}x{width}"
            )));
        }
        if values.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "map {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidConfig(format!(
                "probability {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn constant(height: usize, width: usize, p: f64) -> Result<Self> {
        Self::new(height, width, vec![p; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn same_dims(&self, height: usize, width: usize) -> bool {
        self.height == height && self.width == width
    }
}

/// Binary segmentation mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::DimensionMismatch(format!(
                "mask dimensions must be positive, got {height}x{width}"
            )));
        }
        if bits.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "mask {height}x{width} needs {} bits, got {}",
                height * width,
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![false; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Mask as a `{0, 1}` probability map.
    pub fn to_prob_map(&self) -> ProbMap {
        ProbMap {
            height: self.height,
            width: self.width,
            values: self.bits.iter().map(|&b| f64::from(u8::from(b))).collect(),
        }
    }
}
