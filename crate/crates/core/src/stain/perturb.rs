use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{od_to_intensity, ConcentrationMap, StainMatrix};
use crate::error::{Error, Result};
use crate::raster::RgbImage;

/// Per-stain scale (`alpha`) and shift (`beta`, OD units) of the
/// concentrations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StainPerturbation {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
}

impl StainPerturbation {
    pub const IDENTITY: Self = Self {
        alpha: [1.0, 1.0],
        beta: [0.0, 0.0],
    };

    pub fn new(alpha: [f64; 2], beta: [f64; 2]) -> Result<Self> {
        if alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be > 0, got {alpha:?}"
            )));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "beta must be finite, got {beta:?}"
            )));
        }
        Ok(Self { alpha, beta })
    }
}

/// Draws `alpha_i ~ U(1 - sigma_alpha, 1 + sigma_alpha)` and
/// `beta_i ~ U(-sigma_beta, sigma_beta)`, in the order alpha0, alpha1, beta0, beta1.
pub fn sample_perturbation(
    rng_seed: u64,
    sigma_alpha: f64,
    sigma_beta: f64,
) -> Result<StainPerturbation> {
    if !(0.0..1.0).contains(&sigma_alpha) {
        return Err(Error::InvalidConfig(format!(
            "sigma_alpha must be in [0, 1), got {sigma_alpha}"
        )));
    }
    if !(sigma_beta >= 0.0) || !sigma_beta.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "sigma_beta must be >= 0, got {sigma_beta}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut draw = |lo: f64, hi: f64| rng.gen_range(lo..=hi);
    let alpha = [
        draw(1.0 - sigma_alpha, 1.0 + sigma_alpha),
        draw(1.0 - sigma_alpha, 1.0 + sigma_alpha),
    ];
    let beta = [draw(-sigma_beta, sigma_beta), draw(-sigma_beta, sigma_beta)];
    StainPerturbation::new(alpha, beta)
}

/// Rebuilds RGB from `S (diag(alpha) C + beta)`. Each per-stain term is
/// floored at zero so the resulting density stays nonnegative.
pub fn perturb(
    image: &RgbImage,
    stains: &StainMatrix,
    conc: &ConcentrationMap,
    pert: &StainPerturbation,
    white_point: f64,
) -> Result<RgbImage> {
    if conc.height != image.height() || conc.width != image.width() {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{} but concentrations are {}x{}",
            image.height(),
            image.width(),
            conc.height,
            conc.width
        )));
    }
    Ok(render(stains, conc, pert, white_point))
}

/// `od_to_rgb(S C)`: the plain reconstruction, identical to [`perturb`] with
/// [`StainPerturbation::IDENTITY`].
pub fn reconstruct(stains: &StainMatrix, conc: &ConcentrationMap, white_point: f64) -> RgbImage {
    render(stains, conc, &StainPerturbation::IDENTITY, white_point)
}

fn render(
    stains: &StainMatrix,
    conc: &ConcentrationMap,
    pert: &StainPerturbation,
    white_point: f64,
) -> RgbImage {
    let data = conc
        .conc
        .iter()
        .flat_map(|c| {
            let scaled = [
                (pert.alpha[0] * c[0] + pert.beta[0]).max(0.0),
                (pert.alpha[1] * c[1] + pert.beta[1]).max(0.0),
            ];
            stains
                .apply(scaled)
                .map(|od| od_to_intensity(od, white_point))
        })
        .collect();
    RgbImage::new(conc.height, conc.width, data).expect("concentration map dims are valid")
}
