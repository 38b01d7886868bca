//! From probability maps to point detections.
//!
//! [`detect`] thresholds the map, dilates the mask so that fragments of one
//! figure fuse, labels the connected components and reports the midpoint of
//! each component's bounding box.

mod components;
mod morphology;

pub use components::{
    component_centers, connected_components, BoundingBox, Component, Connectivity, Labeling,
};
pub use morphology::dilate;

use crate::dataset::Detection;
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ProbMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocConfig {
    pub binarize_threshold: f64,
    pub dilation_radius: usize,
    pub connectivity: Connectivity,
    pub min_component_area: usize,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        Self {
            binarize_threshold: 0.5,
            dilation_radius: 15,
            connectivity: Connectivity::Eight,
            min_component_area: 20,
        }
    }
}

impl PostprocConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "binarize_threshold must be in (0, 1), got {}",
                self.binarize_threshold
            )));
        }
        Ok(())
    }
}

/// `1` wherever the probability is at least `threshold`.
pub fn binarize(map: &ProbMap, threshold: f64) -> BinaryMask {
    let bits = map.values().iter().map(|&v| v >= threshold).collect();
    BinaryMask::new(map.height(), map.width(), bits).expect("same dims as map")
}

/// Point detections sorted by `(y, x)`. The score of a detection is the
/// highest probability among the thresholded pixels of its component, taken
/// before dilation.
pub fn detect(map: &ProbMap, cfg: &PostprocConfig, slide_id: &str) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let raw = binarize(map, cfg.binarize_threshold);
    let grown = dilate(&raw, cfg.dilation_radius);
    let labeling = connected_components(&grown, cfg.connectivity);

    let mut score = vec![0.0f64; labeling.components.len()];
    for (i, (&bit, &label)) in raw.bits().iter().zip(&labeling.labels).enumerate() {
        if bit {
            let s = &mut score[label as usize - 1];
            *s = s.max(map.values()[i]);
        }
    }

    let mut out: Vec<Detection> = labeling
        .components
        .iter()
        .filter(|c| c.area >= cfg.min_component_area)
        .map(|c| {
            let (x, y) = c.bbox.center();
            Detection::new(slide_id, x, y, score[c.label as usize - 1])
        })
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));
    Ok(out)
}

/// Per-pixel mean of several maps, folded in list order.
pub fn ensemble_mean(maps: &[ProbMap]) -> Result<ProbMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::EmptyInput("ensemble needs at least one map".into()))?;
    let (h, w) = (first.height(), first.width());
    if let Some(bad) = maps.iter().find(|m| !m.same_dims(h, w)) {
        return Err(Error::DimensionMismatch(format!(
            "ensemble member is {}x{}, expected {h}x{w}",
            bad.height(),
            bad.width()
        )));
    }
    let mut mean = first.values().to_vec();
    for (k, map) in maps.iter().enumerate().skip(1) {
        let n = (k + 1) as f64;
        for (m, &v) in mean.iter_mut().zip(map.values()) {
            *m += (v - *m) / n;
        }
    }
    for m in &mut mean {
        *m = m.clamp(0.0, 1.0);
    }
    ProbMap::new(h, w, mean)
}
