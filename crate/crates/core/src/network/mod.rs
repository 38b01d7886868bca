//! Inference-only VM-UNet: a U-shaped encoder/decoder whose blocks mix
//! tokens with a two-dimensional selective scan.
//!
//! All activations are `f64`; stored weights are `f32` and widened on use.

pub mod layers;
pub mod scan;
pub mod ss2d;
mod tensor;
pub mod vmunet;
pub mod weights;

pub use scan::{selective_scan_1d, selective_scan_chunked, SsmParams};
pub use ss2d::{scan_order, ss2d, Ss2dWeights, SsmProjection};
pub use tensor::Tensor;
pub use vmunet::{
    image_to_tensor, vmunet_forward, vmunet_forward_traced, vss_block, ForwardTrace, VmUnet,
    VssBlockWeights,
};
pub use weights::{
    init_weights, load_weights, parameter_shapes, save_weights, WeightArray, WeightStore,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VmUnetConfig {
    pub embed_dim: usize,
    pub encoder_depths: [usize; 4],
    pub decoder_depths: [usize; 4],
    pub state_dim: usize,
    pub patch_size: usize,
    /// Inner width of a VSS block relative to its input.
    pub expand: usize,
}

impl Default for VmUnetConfig {
    fn default() -> Self {
        Self {
            embed_dim: 96,
            encoder_depths: [2, 2, 2, 2],
            decoder_depths: [2, 2, 2, 1],
            state_dim: 16,
            patch_size: 4,
            expand: 2,
        }
    }
}

impl VmUnetConfig {
    /// Small configuration for tests and examples.
    pub fn desk() -> Self {
        Self {
            embed_dim: 24,
            encoder_depths: [1; 4],
            decoder_depths: [1; 4],
            state_dim: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size != 4 {
            return Err(Error::InvalidConfig(format!(
                "patch_size must be 4, got {}",
                self.patch_size
            )));
        }
        if self.embed_dim == 0 || !self.embed_dim.is_multiple_of(4) {
            return Err(Error::InvalidConfig(format!(
                "embed_dim must be a positive multiple of 4, got {}",
                self.embed_dim
            )));
        }
        if self.state_dim == 0 || self.expand == 0 {
            return Err(Error::InvalidConfig(
                "state_dim and expand must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Channels of encoder stage `s` (0-based).
    pub fn stage_dim(&self, s: usize) -> usize {
        self.embed_dim << s
    }

    pub fn inner_dim(&self, dim: usize) -> usize {
        self.expand * dim
    }

    pub fn dt_rank(&self, dim: usize) -> usize {
        dim.div_ceil(16)
    }

    /// Input sides must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        self.patch_size * 8
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = VmUnetConfig::default();
        c.validate().unwrap();
        let dims: Vec<usize> = (0..4).map(|s| c.stage_dim(s)).collect();
        assert_eq!(dims, vec![96, 192, 384, 768]);
        assert_eq!(c.dt_rank(96), 6);
        assert_eq!(c.dt_rank(24), 2);
        assert_eq!(c.size_multiple(), 32);
    }

    #[test]
    fn rejects_bad_patch() {
        let c = VmUnetConfig {
            patch_size: 2,
            ..VmUnetConfig::desk()
        };
        assert!(c.validate().is_err());
    }
}
