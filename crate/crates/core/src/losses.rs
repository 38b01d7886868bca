//! Dice and focal losses over probability maps, with analytic gradients.

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ProbMap};

/// Probabilities are clamped to `[FOCAL_CLAMP, 1 - FOCAL_CLAMP]` inside the
/// focal log.
pub const FOCAL_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub dice_epsilon: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    pub dice_weight: f64,
    pub focal_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            dice_epsilon: 1.0,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            dice_weight: 1.0,
            focal_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dice_epsilon > 0.0) {
            return Err(Error::InvalidConfig("dice_epsilon must be > 0".into()));
        }
        if !(self.focal_gamma >= 0.0) {
            return Err(Error::InvalidConfig("focal_gamma must be >= 0".into()));
        }
        if !(self.focal_alpha > 0.0 && self.focal_alpha <= 1.0) {
            return Err(Error::InvalidConfig("focal_alpha must be in (0, 1]".into()));
        }
        if !(self.dice_weight >= 0.0 && self.focal_weight >= 0.0) {
            return Err(Error::InvalidConfig("loss weights must be >= 0".into()));
        }
        if self.dice_weight == 0.0 && self.focal_weight == 0.0 {
            return Err(Error::InvalidConfig("loss weights are both zero".into()));
        }
        Ok(())
    }
}

fn check(pred: &ProbMap, target: &BinaryMask) -> Result<()> {
    if !pred.same_dims(target.height(), target.width()) {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs target {}x{}",
            pred.height(),
            pred.width(),
            target.height(),
            target.width()
        )));
    }
    Ok(())
}

#[inline]
fn t_of(bit: bool) -> f64 {
    if bit {
        1.0
    } else {
        0.0
    }
}

/// `1 - (2 sum(p t) + eps) / (sum(p) + sum(t) + eps)`.
pub fn dice_loss(pred: &ProbMap, target: &BinaryMask, cfg: &LossConfig) -> Result<f64> {
    check(pred, target)?;
    let (inter, union) = dice_terms(pred, target);
    let eps = cfg.dice_epsilon;
    Ok(1.0 - (2.0 * inter + eps) / (union + eps))
}

fn dice_terms(pred: &ProbMap, target: &BinaryMask) -> (f64, f64) {
    pred.values()
        .iter()
        .zip(target.bits())
        .fold((0.0, 0.0), |(i, u), (&p, &b)| {
            let t = t_of(b);
            (i + p * t, u + p + t)
        })
}

fn dice_grad(pred: &ProbMap, target: &BinaryMask, eps: f64) -> Vec<f64> {
    let (inter, union) = dice_terms(pred, target);
    let num = 2.0 * inter + eps;
    let den = union + eps;
    target
        .bits()
        .iter()
        .map(|&b| -(2.0 * t_of(b) * den - num) / (den * den))
        .collect()
}

/// Focal loss of one pixel and its derivative w.r.t. the unclamped probability.
#[inline]
fn focal_pixel(p: f64, t: bool, gamma: f64, alpha: f64) -> (f64, f64) {
    let inside = (FOCAL_CLAMP..=1.0 - FOCAL_CLAMP).contains(&p);
    let p = p.clamp(FOCAL_CLAMP, 1.0 - FOCAL_CLAMP);
    let (pt, at, sign) = if t {
        (p, alpha, 1.0)
    } else {
        (1.0 - p, 1.0 - alpha, -1.0)
    };
    let q = 1.0 - pt;
    let loss = -at * q.powf(gamma) * pt.ln();
    if !inside {
        return (loss, 0.0);
    }
    // d/dpt of -at q^g ln(pt) = at (g q^(g-1) ln(pt) - q^g / pt)
    let dq = if gamma == 0.0 {
        0.0
    } else {
        gamma * q.powf(gamma - 1.0) * pt.ln()
    };
    let d_pt = at * (dq - q.powf(gamma) / pt);
    (loss, sign * d_pt)
}

/// Mean over pixels of `-alpha_t (1 - p_t)^gamma ln(p_t)`.
pub fn focal_loss(pred: &ProbMap, target: &BinaryMask, cfg: &LossConfig) -> Result<f64> {
    check(pred, target)?;
    let n = pred.values().len() as f64;
    let sum: f64 = pred
        .values()
        .iter()
        .zip(target.bits())
        .map(|(&p, &t)| focal_pixel(p, t, cfg.focal_gamma, cfg.focal_alpha).0)
        .sum();
    Ok(sum / n)
}

/// `dice_weight * dice + focal_weight * focal`.
pub fn combined_loss(pred: &ProbMap, target: &BinaryMask, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    let mut total = 0.0;
    if cfg.dice_weight != 0.0 {
        total += cfg.dice_weight * dice_loss(pred, target, cfg)?;
    }
    if cfg.focal_weight != 0.0 {
        total += cfg.focal_weight * focal_loss(pred, target, cfg)?;
    }
    Ok(total)
}

/// Exact derivative of [`combined_loss`] with respect to every prediction
/// pixel, row-major.
pub fn combined_loss_grad(
    pred: &ProbMap,
    target: &BinaryMask,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check(pred, target)?;
    let n = pred.values().len() as f64;
    let mut grad = if cfg.dice_weight != 0.0 {
        dice_grad(pred, target, cfg.dice_epsilon)
            .into_iter()
            .map(|g| cfg.dice_weight * g)
            .collect()
    } else {
        vec![0.0; pred.values().len()]
    };
    if cfg.focal_weight != 0.0 {
        for ((g, &p), &t) in grad.iter_mut().zip(pred.values()).zip(target.bits()) {
            let (_, d) = focal_pixel(p, t, cfg.focal_gamma, cfg.focal_alpha);
            *g += cfg.focal_weight * d / n;
        }
    }
    Ok(grad)
}
