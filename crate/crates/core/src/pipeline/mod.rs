//! Slide-level orchestration: predictors, tiled prediction with ensembling,
//! dataset-wide detection and evaluation.

mod batches;
mod synth;

pub use batches::{build_balanced_batches, label_tiles, TileSample};
pub use synth::{
    random_concentrations, reference_stains, scatter_points, synth_mask_from_points,
    two_stain_image, SyntheticDataset,
};

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::{sort_detections, Annotation, DatasetManifest, Detection};
use crate::error::{Error, Result};
use crate::eval::{
    leave_one_domain_out_report, match_detections, DomainReport, MatchResult, DEFAULT_MATCH_RADIUS,
};
use crate::io::load_image;
use crate::network::{init_weights, load_weights, VmUnet, VmUnetConfig};
use crate::postproc::{detect, ensemble_mean, PostprocConfig};
use crate::raster::{ProbMap, RgbImage};
use crate::tiling::{plan_tiles, TileAccumulator, TilingConfig};

/// Default disc radius of the oracle predictor, in pixels.
pub const DEFAULT_ORACLE_RADIUS: usize = 10;

/// Tiles predicted concurrently before being folded into the running mean.
const TILE_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum WeightSource {
    File(PathBuf),
    /// Seeded random initialization from the run seed.
    Seeded,
}

/// Where per-tile probabilities come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictorSpec {
    Network {
        weights: WeightSource,
        config: VmUnetConfig,
    },
    /// Disc masks around the ground-truth centers of the slide.
    Oracle {
        radius: usize,
    },
    Constant(f64),
}

impl PredictorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PredictorSpec::Constant(p) if !(0.0..=1.0).contains(p) => Err(Error::InvalidConfig(
                format!("constant predictor value {p} outside [0, 1]"),
            )),
            PredictorSpec::Network { config, .. } => config.validate(),
            _ => Ok(()),
        }
    }
}

/// Parses `constant:P`, `oracle`, `oracle:R`, `network:PATH`,
/// `network:PATH:desk` and `random` / `random:desk` (seeded weights).
impl FromStr for PredictorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidConfig(format!("predictor `{s}`: {why}"));
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let spec = match kind {
            "constant" => {
                PredictorSpec::Constant(rest.parse().map_err(|_| bad("expected constant:P"))?)
            }
            "oracle" if rest.is_empty() => PredictorSpec::Oracle {
                radius: DEFAULT_ORACLE_RADIUS,
            },
            "oracle" => PredictorSpec::Oracle {
                radius: rest.parse().map_err(|_| bad("expected oracle:RADIUS"))?,
            },
            "network" | "random" => {
                let (body, config) = match rest.rsplit_once(':') {
                    Some((b, "desk")) => (b, VmUnetConfig::desk()),
                    Some((b, "default")) => (b, VmUnetConfig::default()),
                    _ if rest == "desk" => ("", VmUnetConfig::desk()),
                    _ if rest == "default" => ("", VmUnetConfig::default()),
                    _ => (rest, VmUnetConfig::default()),
                };
                let weights = if kind == "random" {
                    if !body.is_empty() {
                        return Err(bad("expected random or random:desk"));
                    }
                    WeightSource::Seeded
                } else {
                    if body.is_empty() {
                        return Err(bad("expected network:PATH"));
                    }
                    WeightSource::File(body.into())
                };
                PredictorSpec::Network { weights, config }
            }
            _ => {
                return Err(bad(
                    "unknown kind, expected constant, oracle, network or random",
                ))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let suffix = |c: &VmUnetConfig| {
            if *c == VmUnetConfig::desk() {
                ":desk"
            } else {
                ""
            }
        };
        match self {
            PredictorSpec::Constant(p) => write!(f, "constant:{p}"),
            PredictorSpec::Oracle { radius } => write!(f, "oracle:{radius}"),
            PredictorSpec::Network {
                weights: WeightSource::File(p),
                config,
            } => write!(f, "network:{}{}", p.display(), suffix(config)),
            PredictorSpec::Network {
                weights: WeightSource::Seeded,
                config,
            } => write!(f, "random{}", suffix(config)),
        }
    }
}

/// Training schedule, recorded for reference only; nothing here trains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConstants {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TrainingConstants {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 5e-4,
            batch_size: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tiling: TilingConfig,
    pub postproc: PostprocConfig,
    pub match_radius: f64,
    pub seed: u64,
    pub ensemble: Vec<PredictorSpec>,
    pub training: TrainingConstants,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tiling: TilingConfig::default(),
            postproc: PostprocConfig::default(),
            match_radius: DEFAULT_MATCH_RADIUS,
            seed: 0,
            ensemble: vec![PredictorSpec::Oracle {
                radius: DEFAULT_ORACLE_RADIUS,
            }],
            training: TrainingConstants::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.tiling.validate()?;
        self.postproc.validate()?;
        if !(self.match_radius >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "match radius must be >= 0, got {}",
                self.match_radius
            )));
        }
        if self.ensemble.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one predictor is required".into(),
            ));
        }
        self.ensemble.iter().try_for_each(PredictorSpec::validate)
    }
}

/// A predictor with its resources loaded.
pub enum Predictor {
    Network(Box<VmUnet>),
    Oracle { radius: usize },
    Constant(f64),
}

impl Predictor {
    pub fn load(spec: &PredictorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(match spec {
            PredictorSpec::Constant(p) => Predictor::Constant(*p),
            PredictorSpec::Oracle { radius } => Predictor::Oracle { radius: *radius },
            PredictorSpec::Network { weights, config } => {
                let store = match weights {
                    WeightSource::File(path) => load_weights(path)?,
                    WeightSource::Seeded => init_weights(config, seed)?,
                };
                Predictor::Network(Box::new(VmUnet::new(&store, config)?))
            }
        })
    }

    /// Probabilities for the tile at `origin`. The oracle reads the
    /// slide's annotations instead of the pixels.
    pub fn predict_tile(
        &self,
        tile: &RgbImage,
        origin: (usize, usize),
        annotations: &[Annotation],
    ) -> Result<ProbMap> {
        let (h, w) = (tile.height(), tile.width());
        match self {
            Predictor::Constant(p) => ProbMap::constant(h, w, *p),
            Predictor::Oracle { radius } => {
                let (ox, oy) = (origin.0 as f64, origin.1 as f64);
                let pts: Vec<(f64, f64)> =
                    annotations.iter().map(|a| (a.x - ox, a.y - oy)).collect();
                Ok(synth_mask_from_points(&pts, h, w, *radius).to_prob_map())
            }
            Predictor::Network(net) => net.forward(tile),
        }
    }

    /// Plans tiles, predicts them and averages overlapping predictions.
    pub fn predict_image(
        &self,
        image: &RgbImage,
        annotations: &[Annotation],
        tiling: &TilingConfig,
    ) -> Result<ProbMap> {
        let grid = plan_tiles(image.height(), image.width(), tiling)?;
        let origins = grid.origins();
        let mut acc = TileAccumulator::new(&grid);
        for chunk in origins.chunks(TILE_BATCH) {
            let maps: Vec<ProbMap> = chunk
                .par_iter()
                .map(|&o| self.predict_tile(&grid.extract(image, o)?, o, annotations))
                .collect::<Result<_>>()?;
            for m in &maps {
                acc.push(m)?;
            }
        }
        acc.finish()
    }
}

/// Ensemble mean of every predictor's tiled prediction.
pub fn predict_slide(
    image: &RgbImage,
    annotations: &[Annotation],
    cfg: &RunConfig,
) -> Result<ProbMap> {
    cfg.validate()?;
    let predictors = cfg
        .ensemble
        .iter()
        .map(|s| Predictor::load(s, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    predict_with(&predictors, image, annotations, &cfg.tiling)
}

pub fn predict_with(
    predictors: &[Predictor],
    image: &RgbImage,
    annotations: &[Annotation],
    tiling: &TilingConfig,
) -> Result<ProbMap> {
    let maps = predictors
        .iter()
        .map(|p| p.predict_image(image, annotations, tiling))
        .collect::<Result<Vec<_>>>()?;
    ensemble_mean(&maps)
}

/// Detections for every slide of the manifest, in file order.
pub fn detect_dataset(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let predictors = cfg
        .ensemble
        .iter()
        .map(|s| Predictor::load(s, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    let per_slide: Vec<Vec<Detection>> = manifest
        .slides
        .par_iter()
        .map(|slide| {
            let path = manifest.image_path(slide);
            let image = load_image(&path)?;
            if image.height() != slide.height || image.width() != slide.width {
                return Err(Error::DimensionMismatch(format!(
                    "{}: image is {}x{}, manifest says {}x{}",
                    path.display(),
                    image.height(),
                    image.width(),
                    slide.height,
                    slide.width
                )));
            }
            let map = predict_with(&predictors, &image, &slide.annotations(), &cfg.tiling)?;
            detect(&map, &cfg.postproc, &slide.slide_id)
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<Detection> = per_slide.into_iter().flatten().collect();
    sort_detections(&mut all);
    Ok(all)
}

/// Matches detections to the manifest annotations slide by slide and pools
/// the counts per domain.
pub fn evaluate_dataset(
    detections: &[Detection],
    manifest: &DatasetManifest,
    radius: f64,
) -> Result<DomainReport> {
    let mut by_slide: BTreeMap<&str, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        if manifest.slide(&d.slide_id).is_none() {
            return Err(Error::InvalidConfig(format!(
                "detection for unknown slide `{}`",
                d.slide_id
            )));
        }
        by_slide
            .entry(d.slide_id.as_str())
            .or_default()
            .push(d.clone());
    }
    let per_slide: Vec<(String, MatchResult)> = manifest
        .slides
        .par_iter()
        .map(|slide| {
            let dets = by_slide
                .get(slide.slide_id.as_str())
                .map_or(&[][..], Vec::as_slice);
            (
                slide.domain_id.clone(),
                match_detections(dets, &slide.annotations(), radius),
            )
        })
        .collect();
    leave_one_domain_out_report(&per_slide)
}
