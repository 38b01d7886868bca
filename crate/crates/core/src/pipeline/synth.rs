//! Synthetic masks, stain fixtures and point-annotated datasets.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{DatasetManifest, SlideEntry};
use crate::error::{Error, Result};
use crate::io::save_image;
use crate::raster::{BinaryMask, RgbImage};
use crate::stain::{reconstruct, ConcentrationMap, StainMatrix, DEFAULT_WHITE_POINT};

/// Union of discs `dx^2 + dy^2 <= radius^2` around each point (rounded to
/// the nearest pixel), clipped to the mask. Points may lie outside the mask.
pub fn synth_mask_from_points(
    points: &[(f64, f64)],
    height: usize,
    width: usize,
    radius: usize,
) -> BinaryMask {
    let mut mask = BinaryMask::empty(height, width).expect("mask dims are positive");
    let r = radius as isize;
    for &(px, py) in points {
        let (cx, cy) = (px.round() as isize, py.round() as isize);
        for dy in -r..=r {
            let y = cy + dy;
            if y < 0 || y >= height as isize {
                continue;
            }
            let half = ((r * r - dy * dy) as f64).sqrt().floor() as isize;
            let x0 = (cx - half).max(0);
            let x1 = (cx + half).min(width as isize - 1);
            for x in x0..=x1 {
                mask.set(x as usize, y as usize, true);
            }
        }
    }
    mask
}

/// Hematoxylin-like and eosin-like unit OD directions.
pub fn reference_stains() -> StainMatrix {
    StainMatrix::new([[0.65, 0.70, 0.29], [0.07, 0.99, 0.11]]).expect("reference stains are valid")
}

/// Random concentrations: a `background` fraction of pixels is empty, a
/// `pure` fraction of the rest holds a single stain, the remainder mixes both.
pub fn random_concentrations(
    height: usize,
    width: usize,
    background: f64,
    pure: f64,
    seed: u64,
) -> Result<ConcentrationMap> {
    if height == 0 || width == 0 {
        return Err(Error::DimensionMismatch(format!(
            "cannot build a {height}x{width} map"
        )));
    }
    for (name, v) in [("background", background), ("pure", pure)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidConfig(format!(
                "{name} fraction must be in [0, 1], got {v}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conc = (0..height * width)
        .map(|_| {
            if rng.gen_bool(background) {
                return [0.0, 0.0];
            }
            let a = rng.gen_range(0.3..1.5);
            let b = rng.gen_range(0.3..1.5);
            if rng.gen_bool(pure) {
                if rng.gen_bool(0.5) {
                    [a, 0.0]
                } else {
                    [0.0, b]
                }
            } else {
                [a, b]
            }
        })
        .collect();
    Ok(ConcentrationMap {
        height,
        width,
        conc,
    })
}

/// Renders `stains * conc` as an 8-bit image.
pub fn two_stain_image(stains: &StainMatrix, conc: &ConcentrationMap) -> RgbImage {
    reconstruct(stains, conc, DEFAULT_WHITE_POINT)
}

/// Integer points at least `min_separation` apart and `margin` from every
/// border, placed by seeded rejection sampling.
pub fn scatter_points(
    height: usize,
    width: usize,
    count: usize,
    min_separation: f64,
    margin: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, f64)>> {
    if 2 * margin >= height || 2 * margin >= width {
        return Err(Error::InvalidConfig(format!(
            "margin {margin} leaves no room in a {height}x{width} image"
        )));
    }
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while points.len() < count {
        attempts += 1;
        if attempts > 10_000 * count.max(1) {
            return Err(Error::InvalidConfig(format!(
                "could not place {count} points {min_separation} px apart in {height}x{width}"
            )));
        }
        let x = rng.gen_range(margin..width - margin) as f64;
        let y = rng.gen_range(margin..height - margin) as f64;
        if points
            .iter()
            .all(|&(px, py)| (px - x).hypot(py - y) >= min_separation)
        {
            points.push((x, y));
        }
    }
    Ok(points)
}

/// Shape of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub slides: usize,
    pub domains: usize,
    pub height: usize,
    pub width: usize,
    pub annotations_per_slide: usize,
    pub min_separation: f64,
    pub margin: usize,
    pub seed: u64,
}

impl Default for SyntheticDataset {
    fn default() -> Self {
        Self {
            slides: 5,
            domains: 3,
            height: 2048,
            width: 2048,
            annotations_per_slide: 20,
            min_separation: 64.0,
            margin: 32,
            seed: 0,
        }
    }
}

impl SyntheticDataset {
    /// Builds the manifest and the slide images in memory. Slide `i` belongs
    /// to domain `i % domains`; each domain tints the reference stains.
    pub fn build(&self) -> Result<(DatasetManifest, Vec<RgbImage>)> {
        if self.slides == 0 || self.domains == 0 {
            return Err(Error::InvalidConfig(
                "need at least one slide and one domain".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut slides = Vec::with_capacity(self.slides);
        let mut images = Vec::with_capacity(self.slides);
        for i in 0..self.slides {
            let domain = i % self.domains;
            let points = scatter_points(
                self.height,
                self.width,
                self.annotations_per_slide,
                self.min_separation,
                self.margin,
                &mut rng,
            )?;
            let slide_id = format!("slide_{i:03}");
            images.push(self.render_slide(domain, &points, rng.gen())?);
            slides.push(SlideEntry {
                image_path: format!("{slide_id}.ppm").into(),
                slide_id,
                domain_id: format!("domain_{domain}"),
                width: self.width,
                height: self.height,
                annotations: points.iter().map(|&(x, y)| [x, y]).collect(),
            });
        }
        let manifest = DatasetManifest {
            slides,
            base_dir: Default::default(),
        };
        manifest.validate()?;
        Ok((manifest, images))
    }

    /// Writes `manifest.json` and one PPM per slide into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (mut manifest, images) = self.build()?;
        for (slide, image) in manifest.slides.iter().zip(&images) {
            save_image(image, dir.join(&slide.image_path))?;
        }
        crate::dataset::write_manifest(&manifest, dir.join("manifest.json"))?;
        manifest.base_dir = dir.to_path_buf();
        Ok(manifest)
    }

    fn render_slide(&self, domain: usize, points: &[(f64, f64)], seed: u64) -> Result<RgbImage> {
        let [h0, e0] = *reference_stains().columns();
        let tint = 0.08 * domain as f64;
        let stains = StainMatrix::new([
            [h0[0] + tint, h0[1], h0[2] - 0.5 * tint],
            [e0[0] + 0.5 * tint, e0[1], e0[2]],
        ])?;
        let (h, w) = (self.height, self.width);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phase: [f64; 4] = [rng.gen(), rng.gen(), rng.gen(), rng.gen()];
        let nuclei = synth_mask_from_points(points, h, w, 8);
        let mut conc = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as f64, y as f64);
                let texture = 0.5
                    + 0.25
                        * (fx * 0.031 + phase[0] * 6.3).sin()
                        * (fy * 0.027 + phase[1] * 6.3).cos();
                let eosin = 0.35 + 0.2 * (fx * 0.011 + fy * 0.007 + phase[2] * 6.3).sin();
                let mut hema = 0.15 * texture + 0.1 * (fx * 0.05 + phase[3] * 6.3).sin().abs();
                if nuclei.get(x, y) {
                    hema += 1.2;
                }
                conc.push([hema, eosin.max(0.0)]);
            }
        }
        Ok(two_stain_image(
            &stains,
            &ConcentrationMap {
                height: h,
                width: w,
                conc,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_points_empty_mask() {
        assert_eq!(synth_mask_from_points(&[], 5, 5, 3).count(), 0);
    }

    #[test]
    fn radius_one_disc() {
        let m = synth_mask_from_points(&[(2.0, 2.0)], 5, 5, 1);
        assert_eq!(m.count(), 5);
        assert!(m.get(2, 1) && m.get(1, 2) && m.get(3, 2) && m.get(2, 3));
    }

    #[test]
    fn clipped_at_border() {
        // quarter disc plus the two axis arms
        let m = synth_mask_from_points(&[(0.0, 0.0)], 10, 10, 2);
        assert_eq!(m.count(), 6);
        let outside = synth_mask_from_points(&[(-5.0, -5.0)], 10, 10, 2);
        assert_eq!(outside.count(), 0);
    }

    #[test]
    fn scatter_respects_spacing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = scatter_points(256, 256, 10, 40.0, 16, &mut rng).unwrap();
        for (i, a) in pts.iter().enumerate() {
            assert!(a.0 >= 16.0 && a.0 < 240.0);
            for b in &pts[i + 1..] {
                assert!((a.0 - b.0).hypot(a.1 - b.1) >= 40.0);
            }
        }
    }

    #[test]
    fn dataset_is_seeded() {
        let spec = SyntheticDataset {
            slides: 2,
            domains: 2,
            height: 256,
            width: 256,
            annotations_per_slide: 3,
            seed: 5,
            ..SyntheticDataset::default()
        };
        let (m1, i1) = spec.build().unwrap();
        let (m2, i2) = spec.build().unwrap();
        assert_eq!(m1, m2);
        assert_eq!(i1, i2);
        assert_eq!(m1.domains().len(), 2);
    }

    #[test]
    fn mixing_fractions() {
        let c = random_concentrations(50, 50, 0.0, 1.0, 1).unwrap();
        assert!(c.conc.iter().all(|v| (v[0] == 0.0) != (v[1] == 0.0)));
        assert!(random_concentrations(2, 2, 1.5, 0.0, 1).is_err());
    }
}
