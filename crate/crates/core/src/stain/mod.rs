//! Stain deconvolution and stain-perturbation augmentation.
//!
//! Images are moved to optical density (OD) space, where a two-stain tissue
//! pixel is a nonnegative combination `v = S c` of two unit stain vectors.
//! [`estimate_stains`] factorizes the tissue pixels with sparse nonnegative
//! matrix factorization, and [`perturb`] rebuilds an RGB image from
//! `S (diag(alpha) C + beta)`.

mod nmf;
mod od;
mod perturb;

pub use nmf::{
    estimate_stains, lasso_kkt_residual, objective, solve_concentrations, StainEstimate,
};
pub use od::{intensity_to_od, od_to_intensity, od_to_rgb, rgb_to_od, OdImage};
pub use perturb::{perturb, reconstruct, sample_perturbation, StainPerturbation};

use crate::error::{Error, Result};

pub const DEFAULT_WHITE_POINT: f64 = 255.0;

/// Two unit-norm, nonnegative stain vectors in OD space (the 3x2 matrix `S`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StainMatrix {
    columns: [[f64; 3]; 2],
}

impl StainMatrix {
    /// Normalizes both columns; rejects negative, non-finite or zero columns.
    pub fn new(columns: [[f64; 3]; 2]) -> Result<Self> {
        let mut out = [[0.0; 3]; 2];
        for (k, col) in columns.iter().enumerate() {
            if col.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "stain column {k} must be finite and nonnegative: {col:?}"
                )));
            }
            let n = norm3(col);
            if n == 0.0 {
                return Err(Error::InvalidConfig(format!("stain column {k} is zero")));
            }
            out[k] = col.map(|v| v / n);
        }
        Ok(Self { columns: out })
    }

    /// Same as [`StainMatrix::new`], then applies the column-order convention.
    pub fn new_ordered(columns: [[f64; 3]; 2]) -> Result<Self> {
        let mut s = Self::new(columns)?;
        if s.needs_swap() {
            s.columns.swap(0, 1);
        }
        Ok(s)
    }

    pub fn columns(&self) -> &[[f64; 3]; 2] {
        &self.columns
    }

    pub fn column(&self, k: usize) -> [f64; 3] {
        self.columns[k]
    }

    /// Column with the larger red-channel OD goes first, ties broken on green.
    pub(crate) fn needs_swap(&self) -> bool {
        let [a, b] = self.columns;
        b[0] > a[0] || (b[0] == a[0] && b[1] > a[1])
    }

    /// `S c` for a single pixel.
    #[inline]
    pub fn apply(&self, c: [f64; 2]) -> [f64; 3] {
        let [s0, s1] = &self.columns;
        [
            s0[0] * c[0] + s1[0] * c[1],
            s0[1] * c[0] + s1[1] * c[1],
            s0[2] * c[0] + s1[2] * c[1],
        ]
    }

    /// Angle between column `k` and `v` in radians.
    pub fn angle_to(&self, k: usize, v: [f64; 3]) -> f64 {
        let c = self.columns[k];
        let cos = dot3(&c, &v) / (norm3(&c) * norm3(&v));
        cos.clamp(-1.0, 1.0).acos()
    }
}

/// Per-pixel nonnegative stain concentrations (the matrix `C`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationMap {
    pub height: usize,
    pub width: usize,
    pub conc: Vec<[f64; 2]>,
}

impl ConcentrationMap {
    pub fn l1_norm(&self) -> f64 {
        self.conc.iter().map(|c| c[0] + c[1]).sum()
    }
}

/// Settings for sparse-NMF stain estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct VahadaneParams {
    pub sparsity_lambda: f64,
    /// Pixels with `||od||_2` below this are background.
    pub od_threshold: f64,
    pub max_outer_iters: usize,
    /// Relative objective change that ends the alternating loop.
    pub tolerance: f64,
    pub seed: u64,
    /// Upper bound on tissue pixels used for the factorization.
    pub max_pixels: usize,
    pub white_point: f64,
}

impl Default for VahadaneParams {
    fn default() -> Self {
        Self {
            sparsity_lambda: 0.1,
            od_threshold: 0.15,
            max_outer_iters: 50,
            tolerance: 1e-4,
            seed: 0,
            max_pixels: 100_000,
            white_point: DEFAULT_WHITE_POINT,
        }
    }
}

impl VahadaneParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sparsity_lambda >= 0.0) || !self.sparsity_lambda.is_finite() {
            return Err(Error::InvalidConfig("sparsity_lambda must be >= 0".into()));
        }
        if !(self.od_threshold >= 0.0) {
            return Err(Error::InvalidConfig("od_threshold must be >= 0".into()));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidConfig("max_outer_iters must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be > 0".into()));
        }
        if self.max_pixels == 0 {
            return Err(Error::InvalidConfig("max_pixels must be >= 1".into()));
        }
        if !(self.white_point >= 1.0) {
            return Err(Error::InvalidConfig("white_point must be >= 1".into()));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_normalized_and_ordered() {
        let s = StainMatrix::new_ordered([[0.0, 2.0, 0.0], [3.0, 0.0, 4.0]]).unwrap();
        assert_eq!(s.column(0), [0.6, 0.0, 0.8]);
        assert_eq!(s.column(1), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn ordering_tie_uses_green() {
        let s = StainMatrix::new_ordered([[1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]).unwrap();
        assert!(s.column(0)[1] > s.column(1)[1]);
    }

    #[test]
    fn rejects_negative_or_zero() {
        assert!(StainMatrix::new([[-0.1, 1.0, 0.0], [1.0, 0.0, 0.0]]).is_err());
        assert!(StainMatrix::new([[0.0; 3], [1.0, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(VahadaneParams::default().validate().is_ok());
        let p = VahadaneParams {
            max_outer_iters: 0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = VahadaneParams {
            tolerance: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
