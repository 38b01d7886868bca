//! VSS blocks and the full encoder/decoder forward pass.

use super::layers::{
    depthwise_conv3x3, layer_norm, linear, patch_embed, patch_expand, patch_merge, pixel_shuffle,
    sigmoid, silu,
};
use super::ss2d::{ss2d, Ss2dWeights};
use super::{Tensor, VmUnetConfig, WeightStore};
use crate::error::{Error, Result};
use crate::raster::{ProbMap, RgbImage};

/// Weights of one VSS block, widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct VssBlockWeights {
    pub dim: usize,
    pub inner: usize,
    pub norm_weight: Vec<f64>,
    pub norm_bias: Vec<f64>,
    pub in_proj: Vec<f64>,
    pub conv_weight: Vec<f64>,
    pub conv_bias: Vec<f64>,
    pub ss2d: Ss2dWeights,
    pub out_norm_weight: Vec<f64>,
    pub out_norm_bias: Vec<f64>,
    pub out_proj: Vec<f64>,
}

impl VssBlockWeights {
    pub fn from_store(
        store: &WeightStore,
        prefix: &str,
        dim: usize,
        config: &VmUnetConfig,
    ) -> Result<Self> {
        let inner = config.inner_dim(dim);
        let v = |name: &str, shape: &[usize]| store.values(&format!("{prefix}.{name}"), shape);
        Ok(Self {
            dim,
            inner,
            norm_weight: v("norm.weight", &[dim])?,
            norm_bias: v("norm.bias", &[dim])?,
            in_proj: v("in_proj.weight", &[2 * inner, dim])?,
            conv_weight: v("conv.weight", &[inner, 1, 3, 3])?,
            conv_bias: v("conv.bias", &[inner])?,
            ss2d: Ss2dWeights::from_store(
                store,
                &format!("{prefix}.ss2d"),
                inner,
                config.dt_rank(dim),
                config.state_dim,
            )?,
            out_norm_weight: v("out_norm.weight", &[inner])?,
            out_norm_bias: v("out_norm.bias", &[inner])?,
            out_proj: v("out_proj.weight", &[dim, inner])?,
        })
    }
}

/// `x + branch(x)` where the branch is
/// norm, expand, split into (x, z), depthwise conv, SiLU, ss2d, norm,
/// gate by SiLU(z), contract.
pub fn vss_block(x: &Tensor, w: &VssBlockWeights) -> Result<Tensor> {
    if x.channels() != w.dim {
        return Err(Error::DimensionMismatch(format!(
            "VSS block over {} channels got {}",
            w.dim,
            x.channels()
        )));
    }
    let [n, h, wd, _] = x.shape();
    let di = w.inner;
    let normed = layer_norm(x, &w.norm_weight, &w.norm_bias)?;
    let xz = linear(&normed, &w.in_proj, None, 2 * di)?;
    let mut xs = Vec::with_capacity(x.positions() * di);
    let mut gate = Vec::with_capacity(x.positions() * di);
    for v in xz.data().chunks(2 * di) {
        xs.extend_from_slice(&v[..di]);
        gate.extend(v[di..].iter().map(|&z| silu(z)));
    }
    let xs = Tensor::new([n, h, wd, di], xs)?;
    let mut conv = depthwise_conv3x3(&xs, &w.conv_weight, &w.conv_bias)?;
    conv.data_mut().iter_mut().for_each(|v| *v = silu(*v));
    let scanned = ss2d(&conv, &w.ss2d)?;
    let mut y = layer_norm(&scanned, &w.out_norm_weight, &w.out_norm_bias)?;
    for (v, g) in y.data_mut().iter_mut().zip(&gate) {
        *v *= g;
    }
    let mut out = linear(&y, &w.out_proj, None, w.dim)?;
    out.add_assign(x)?;
    Ok(out)
}

/// Scales an image to `[0, 1]` as a `(1, h, w, 3)` tensor.
pub fn image_to_tensor(image: &RgbImage) -> Tensor {
    let data = image.data().iter().map(|&v| f64::from(v) / 255.0).collect();
    Tensor::new([1, image.height(), image.width(), 3], data).expect("image dims are positive")
}

/// Stage output shapes recorded during a forward pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ForwardTrace {
    /// Encoder stage outputs before merging.
    pub encoder: Vec<[usize; 4]>,
    pub decoder: Vec<[usize; 4]>,
}

struct Stage {
    blocks: Vec<VssBlockWeights>,
    resample: Option<Vec<f64>>,
}

/// A network with its weights unpacked once, reusable across tiles.
pub struct VmUnet {
    config: VmUnetConfig,
    embed_weight: Vec<f64>,
    embed_bias: Vec<f64>,
    encoder: Vec<Stage>,
    decoder: Vec<Stage>,
    final_expand: Vec<f64>,
    final_norm_weight: Vec<f64>,
    final_norm_bias: Vec<f64>,
    head_weight: Vec<f64>,
    head_bias: Vec<f64>,
}

impl VmUnet {
    pub fn new(store: &WeightStore, config: &VmUnetConfig) -> Result<Self> {
        store.validate(config, true)?;
        let c = config.embed_dim;
        let p = config.patch_size;
        let out_ch = c / 4;
        let blocks =
            |side: &str, stage: usize, depth: usize, dim: usize| -> Result<Vec<VssBlockWeights>> {
                (0..depth)
                    .map(|b| {
                        VssBlockWeights::from_store(
                            store,
                            &format!("{side}.{stage}.blocks.{b}"),
                            dim,
                            config,
                        )
                    })
                    .collect()
            };
        let mut encoder = Vec::with_capacity(4);
        for s in 0..4 {
            let dim = config.stage_dim(s);
            let resample = if s < 3 {
                Some(store.values(&format!("encoder.{s}.merge.weight"), &[2 * dim, 4 * dim])?)
            } else {
                None
            };
            encoder.push(Stage {
                blocks: blocks("encoder", s, config.encoder_depths[s], dim)?,
                resample,
            });
        }
        let mut decoder = Vec::with_capacity(4);
        for m in 0..4 {
            let dim = config.stage_dim(3 - m);
            let resample = if m > 0 {
                Some(store.values(&format!("decoder.{m}.expand.weight"), &[4 * dim, 2 * dim])?)
            } else {
                None
            };
            decoder.push(Stage {
                blocks: blocks("decoder", m, config.decoder_depths[m], dim)?,
                resample,
            });
        }
        Ok(Self {
            config: config.clone(),
            embed_weight: store.values("patch_embed.weight", &[c, p * p * 3])?,
            embed_bias: store.values("patch_embed.bias", &[c])?,
            encoder,
            decoder,
            final_expand: store.values("final.expand.weight", &[16 * out_ch, c])?,
            final_norm_weight: store.values("final.norm.weight", &[out_ch])?,
            final_norm_bias: store.values("final.norm.bias", &[out_ch])?,
            head_weight: store.values("head.weight", &[1, out_ch])?,
            head_bias: store.values("head.bias", &[1])?,
        })
    }

    pub fn config(&self) -> &VmUnetConfig {
        &self.config
    }

    /// Probabilities `(n, h, w, 1)` for an input batch scaled to `[0, 1]`.
    pub fn forward_tensor(
        &self,
        input: &Tensor,
        trace: Option<&mut ForwardTrace>,
    ) -> Result<Tensor> {
        let m = self.config.size_multiple();
        if input.channels() != 3
            || !input.height().is_multiple_of(m)
            || !input.width().is_multiple_of(m)
        {
            return Err(Error::DimensionMismatch(format!(
                "network input must be (n, h, w, 3) with h, w multiples of {m}, got {:?}",
                input.shape()
            )));
        }
        let mut local = ForwardTrace::default();
        let c = self.config.embed_dim;
        let mut x = patch_embed(
            input,
            &self.embed_weight,
            &self.embed_bias,
            self.config.patch_size,
            c,
        )?;

        let mut skips = Vec::with_capacity(4);
        for stage in &self.encoder {
            for b in &stage.blocks {
                x = vss_block(&x, b)?;
            }
            local.encoder.push(x.shape());
            skips.push(x.clone());
            if let Some(w) = &stage.resample {
                x = patch_merge(&x, w)?;
            }
        }
        for (m, stage) in self.decoder.iter().enumerate() {
            if let Some(w) = &stage.resample {
                x = patch_expand(&x, w)?;
                x.add_assign(&skips[3 - m])?;
            }
            for b in &stage.blocks {
                x = vss_block(&x, b)?;
            }
            local.decoder.push(x.shape());
        }

        let out_ch = c / 4;
        let x = pixel_shuffle(&linear(&x, &self.final_expand, None, 16 * out_ch)?, 4)?;
        let x = layer_norm(&x, &self.final_norm_weight, &self.final_norm_bias)?;
        let mut logits = linear(&x, &self.head_weight, Some(&self.head_bias), 1)?;
        if !logits.is_finite() {
            return Err(Error::DimensionMismatch(
                "network produced non-finite logits".into(),
            ));
        }
        logits.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        if let Some(t) = trace {
            *t = local;
        }
        Ok(logits)
    }

    pub fn forward(&self, image: &RgbImage) -> Result<ProbMap> {
        self.forward_traced(image).map(|(p, _)| p)
    }

    pub fn forward_traced(&self, image: &RgbImage) -> Result<(ProbMap, ForwardTrace)> {
        let mut trace = ForwardTrace::default();
        let probs = self.forward_tensor(&image_to_tensor(image), Some(&mut trace))?;
        let map = ProbMap::new(image.height(), image.width(), probs.into_data())?;
        Ok((map, trace))
    }
}

/// Probability map with the same dims as `image`, whose sides must be
/// multiples of 32.
pub fn vmunet_forward(
    image: &RgbImage,
    weights: &WeightStore,
    config: &VmUnetConfig,
) -> Result<ProbMap> {
    VmUnet::new(weights, config)?.forward(image)
}

pub fn vmunet_forward_traced(
    image: &RgbImage,
    weights: &WeightStore,
    config: &VmUnetConfig,
) -> Result<(ProbMap, ForwardTrace)> {
    VmUnet::new(weights, config)?.forward_traced(image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_weights;

    fn pattern(h: usize, w: usize) -> RgbImage {
        let data = (0..h * w * 3).map(|i| ((i * 37) % 251) as u8).collect();
        RgbImage::new(h, w, data).unwrap()
    }

    #[test]
    fn desk_forward_shapes() {
        let cfg = VmUnetConfig::desk();
        let store = init_weights(&cfg, 1).unwrap();
        let (map, trace) = vmunet_forward_traced(&pattern(64, 32), &store, &cfg).unwrap();
        assert_eq!((map.height(), map.width()), (64, 32));
        assert_eq!(
            trace.encoder,
            vec![[1, 16, 8, 24], [1, 8, 4, 48], [1, 4, 2, 96], [1, 2, 1, 192]]
        );
        let mut mirrored = trace.encoder.clone();
        mirrored.reverse();
        assert_eq!(trace.decoder, mirrored);
        assert!(map.values().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn rejects_indivisible_input() {
        let cfg = VmUnetConfig::desk();
        let store = init_weights(&cfg, 1).unwrap();
        assert!(vmunet_forward(&pattern(48, 32), &store, &cfg).is_err());
    }

    #[test]
    fn zero_branch_block_is_identity() {
        let cfg = VmUnetConfig::desk();
        let mut store = init_weights(&cfg, 2).unwrap();
        store.zero_matching(".blocks.");
        let w = VssBlockWeights::from_store(&store, "encoder.0.blocks.0", 24, &cfg).unwrap();
        let x = Tensor::new(
            [1, 4, 4, 24],
            (0..384).map(|i| (i as f64 * 0.1).sin()).collect(),
        )
        .unwrap();
        assert_eq!(vss_block(&x, &w).unwrap(), x);
    }
}
