//! Mitosis detection toolkit.
//!
//! The crate covers the inference side of a point-annotated mitosis detector:
//!
//! - [`stain`]: optical density, sparse-NMF stain estimation and stain
//!   perturbation for augmentation.
//! - [`tiling`]: overlapping tile plans and aggregation of tile predictions.
//! - [`network`]: a reference VM-UNet forward pass built on a 2D selective scan.
//! - [`losses`]: Dice and focal losses with analytic gradients.
//! - [`postproc`]: thresholding, dilation and component centers.
//! - [`eval`]: detection matching and per-domain F1.
//! - [`pipeline`]: predictors, ensembling, balanced batches, synthetic data.
//!
//! ```
//! use mitoseg::tiling::{plan_tiles, TilingConfig};
//!
//! let grid = plan_tiles(512, 1024, &TilingConfig::default()).unwrap();
//! assert_eq!(grid.x_origins, [0, 102, 204, 306, 408, 510, 512]);
//! ```

// NaN must fail validation, hence `!(x > 0.0)`
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod io;
pub mod losses;
pub mod network;
pub mod pipeline;
pub mod postproc;
pub mod raster;
pub mod stain;
pub mod tiling;

pub use dataset::{Annotation, DatasetManifest, Detection};
pub use error::{Error, Result};
pub use raster::{BinaryMask, ProbMap, RgbImage};
