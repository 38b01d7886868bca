//! Position-wise layers and the patch reshaping blocks.
//!
//! Linear weights are stored `[out, in]`. Sub-positions of a 2x2 (or fxf)
//! neighborhood are ordered row-major, `k = dy * f + dx`, by both
//! [`patch_merge`] and [`pixel_shuffle`], so a merge followed by an expand
//! with transposed projections round-trips.

use rayon::prelude::*;

use super::Tensor;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[inline]
pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 20.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `y = W x (+ b)` applied at every position.
pub fn linear(x: &Tensor, weight: &[f64], bias: Option<&[f64]>, out_ch: usize) -> Result<Tensor> {
    let in_ch = x.channels();
    if weight.len() != out_ch * in_ch {
        return Err(Error::DimensionMismatch(format!(
            "linear weight has {} values, expected {out_ch}x{in_ch}",
            weight.len()
        )));
    }
    if let Some(b) = bias {
        if b.len() != out_ch {
            return Err(Error::DimensionMismatch(format!(
                "linear bias has {} values, expected {out_ch}",
                b.len()
            )));
        }
    }
    let [n, h, w, _] = x.shape();
    let mut out = vec![0.0; x.positions() * out_ch];
    out.par_chunks_mut(out_ch)
        .zip(x.data().par_chunks(in_ch))
        .for_each(|(o, xi)| {
            for (j, oj) in o.iter_mut().enumerate() {
                let row = &weight[j * in_ch..(j + 1) * in_ch];
                let mut acc = bias.map_or(0.0, |b| b[j]);
                for (wv, xv) in row.iter().zip(xi) {
                    acc += wv * xv;
                }
                *oj = acc;
            }
        });
    Tensor::new([n, h, w, out_ch], out)
}

/// Layer normalization over channels with affine `gamma`, `beta`.
pub fn layer_norm(x: &Tensor, gamma: &[f64], beta: &[f64]) -> Result<Tensor> {
    let c = x.channels();
    if gamma.len() != c || beta.len() != c {
        return Err(Error::DimensionMismatch(format!(
            "layer norm over {c} channels got {} / {} affine values",
            gamma.len(),
            beta.len()
        )));
    }
    let mut out = x.clone();
    out.data_mut().par_chunks_mut(c).for_each(|v| {
        let mean = v.iter().sum::<f64>() / c as f64;
        let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for (i, a) in v.iter_mut().enumerate() {
            *a = (*a - mean) * inv * gamma[i] + beta[i];
        }
    });
    Ok(out)
}

/// Depthwise 3x3 convolution, stride 1, zero padding 1. `weight` is
/// `[channels, 1, 3, 3]`.
pub fn depthwise_conv3x3(x: &Tensor, weight: &[f64], bias: &[f64]) -> Result<Tensor> {
    let [n, h, w, c] = x.shape();
    if weight.len() != c * 9 || bias.len() != c {
        return Err(Error::DimensionMismatch(format!(
            "depthwise conv over {c} channels got {} weights / {} biases",
            weight.len(),
            bias.len()
        )));
    }
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    out.par_chunks_mut(w * c).enumerate().for_each(|(row, o)| {
        let b = row / h;
        let y = row % h;
        for xx in 0..w {
            for ch in 0..c {
                let mut acc = bias[ch];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let si = ((b * h + sy as usize) * w + sx as usize) * c + ch;
                        acc += weight[ch * 9 + ky * 3 + kx] * src[si];
                    }
                }
                o[xx * c + ch] = acc;
            }
        }
    });
    Tensor::new([n, h, w, c], out)
}

/// Splits an image batch into non-overlapping `patch x patch` patches and
/// maps each flattened patch (order `dy, dx, channel`) affinely to
/// `embed` features. `weight` is `[embed, patch * patch * in_ch]`.
pub fn patch_embed(
    x: &Tensor,
    weight: &[f64],
    bias: &[f64],
    patch: usize,
    embed: usize,
) -> Result<Tensor> {
    let [n, h, w, c] = x.shape();
    if h % patch != 0 || w % patch != 0 {
        return Err(Error::DimensionMismatch(format!(
            "input {h}x{w} not divisible by patch size {patch}"
        )));
    }
    let patches = space_to_depth(x, patch)?;
    debug_assert_eq!(patches.channels(), patch * patch * c);
    let _ = n;
    linear(&patches, weight, Some(bias), embed)
}

/// Gathers each `f x f` neighborhood into channels: `(n, h, w, c)` to
/// `(n, h/f, w/f, f*f*c)` with sub-position `k = dy * f + dx` occupying
/// channels `k*c..(k+1)*c`.
pub fn space_to_depth(x: &Tensor, f: usize) -> Result<Tensor> {
    let [n, h, w, c] = x.shape();
    if h % f != 0 || w % f != 0 {
        return Err(Error::DimensionMismatch(format!(
            "spatial dims {h}x{w} not divisible by {f}"
        )));
    }
    let (ho, wo) = (h / f, w / f);
    let mut out = Vec::with_capacity(x.data().len());
    for b in 0..n {
        for y in 0..ho {
            for xx in 0..wo {
                for dy in 0..f {
                    for dx in 0..f {
                        let i = x.index(b, y * f + dy, xx * f + dx, 0);
                        out.extend_from_slice(&x.data()[i..i + c]);
                    }
                }
            }
        }
    }
    Tensor::new([n, ho, wo, f * f * c], out)
}

/// Inverse of [`space_to_depth`]: `(n, h, w, f*f*c)` to `(n, f*h, f*w, c)`.
pub fn pixel_shuffle(x: &Tensor, f: usize) -> Result<Tensor> {
    let [n, h, w, cin] = x.shape();
    if cin % (f * f) != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{cin} channels not divisible by {}",
            f * f
        )));
    }
    let c = cin / (f * f);
    let mut out = Tensor::zeros([n, h * f, w * f, c]);
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let src = x.index(b, y, xx, 0);
                for dy in 0..f {
                    for dx in 0..f {
                        let k = dy * f + dx;
                        let dst = out.index(b, y * f + dy, xx * f + dx, 0);
                        let vals = x.data()[src + k * c..src + (k + 1) * c].to_vec();
                        out.data_mut()[dst..dst + c].copy_from_slice(&vals);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// 2x2 patch merging: concatenate each neighborhood (`4c`) and project to
/// `2c` without bias. `weight` is `[2c, 4c]`.
pub fn patch_merge(x: &Tensor, weight: &[f64]) -> Result<Tensor> {
    let [_, h, w, c] = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::DimensionMismatch(format!(
            "patch merge needs even spatial dims, got {h}x{w}"
        )));
    }
    linear(&space_to_depth(x, 2)?, weight, None, 2 * c)
}

/// 2x patch expanding: project `c` to `2c` without bias, then shuffle to
/// `(2h, 2w, c/2)`. `weight` is `[2c, c]`.
pub fn patch_expand(x: &Tensor, weight: &[f64]) -> Result<Tensor> {
    let c = x.channels();
    if !c.is_multiple_of(2) {
        return Err(Error::DimensionMismatch(format!(
            "patch expand needs an even channel count, got {c}"
        )));
    }
    pixel_shuffle(&linear(x, weight, None, 2 * c)?, 2)
}
