//! Overlapping tile plans and aggregation of per-tile predictions.
//!
//! Regular origins are placed every `stride` pixels along each axis; when the
//! last regular tile stops short of the border, one extra tile is clamped to
//! `dim - tile_size`. Axes shorter than a tile get a single origin at zero
//! and the tile is filled by symmetric reflection.

use crate::error::{Error, Result};
use crate::raster::{ProbMap, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TilingConfig {
    pub tile_size: usize,
    pub overlap_fraction: f64,
}

impl Default for TilingConfig {
    fn default() -> Self {
        Self {
            tile_size: 512,
            overlap_fraction: 0.8,
        }
    }
}

impl TilingConfig {
    pub fn new(tile_size: usize, overlap_fraction: f64) -> Result<Self> {
        let cfg = Self {
            tile_size,
            overlap_fraction,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_size == 0 {
            return Err(Error::InvalidConfig("tile_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::InvalidConfig(format!(
                "overlap_fraction must be in [0, 1), got {}",
                self.overlap_fraction
            )));
        }
        Ok(())
    }

    /// `max(1, round(tile_size * (1 - overlap)))`.
    pub fn stride(&self) -> usize {
        ((self.tile_size as f64 * (1.0 - self.overlap_fraction)).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileGrid {
    pub height: usize,
    pub width: usize,
    pub tile_size: usize,
    pub stride: usize,
    pub x_origins: Vec<usize>,
    pub y_origins: Vec<usize>,
}

impl TileGrid {
    /// `(x, y)` origins in row-major order.
    pub fn origins(&self) -> Vec<(usize, usize)> {
        self.y_origins
            .iter()
            .flat_map(|&y| self.x_origins.iter().map(move |&x| (x, y)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.x_origins.len() * self.y_origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, origin: (usize, usize)) -> bool {
        self.x_origins.binary_search(&origin.0).is_ok()
            && self.y_origins.binary_search(&origin.1).is_ok()
    }

    /// Whether either axis is shorter than a tile and needs padding.
    pub fn is_padded(&self) -> bool {
        self.height < self.tile_size || self.width < self.tile_size
    }

    /// Extracts the tile at `origin`, which must belong to this grid.
    pub fn extract(&self, image: &RgbImage, origin: (usize, usize)) -> Result<RgbImage> {
        if !self.contains(origin) {
            return Err(Error::TileNotInGrid {
                x: origin.0,
                y: origin.1,
            });
        }
        if image.height() != self.height || image.width() != self.width {
            return Err(Error::DimensionMismatch(format!(
                "grid planned for {}x{}, image is {}x{}",
                self.height,
                self.width,
                image.height(),
                image.width()
            )));
        }
        extract_tile(image, origin, self.tile_size)
    }
}

fn axis_origins(dim: usize, tile: usize, stride: usize) -> Vec<usize> {
    if dim <= tile {
        return vec![0];
    }
    let mut out: Vec<usize> = (0..)
        .map(|k| k * stride)
        .take_while(|&o| o + tile <= dim)
        .collect();
    let last = *out.last().expect("origin 0 always fits");
    if last + tile < dim {
        out.push(dim - tile);
    }
    out
}

pub fn plan_tiles(height: usize, width: usize, config: &TilingConfig) -> Result<TileGrid> {
    config.validate()?;
    if height == 0 || width == 0 {
        return Err(Error::DimensionMismatch(format!(
            "cannot tile a {height}x{width} image"
        )));
    }
    let stride = config.stride();
    Ok(TileGrid {
        height,
        width,
        tile_size: config.tile_size,
        stride,
        x_origins: axis_origins(width, config.tile_size, stride),
        y_origins: axis_origins(height, config.tile_size, stride),
    })
}

/// Symmetric (edge-repeating) reflection of `i` into `0..n`.
#[inline]
fn reflect(i: usize, n: usize) -> usize {
    let m = i % (2 * n);
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Copies the `tile_size` window at `origin`, reflecting past the border of
/// images smaller than a tile. A window reaching past the border of an axis
/// that is at least one tile long is rejected.
pub fn extract_tile(
    image: &RgbImage,
    origin: (usize, usize),
    tile_size: usize,
) -> Result<RgbImage> {
    let (ox, oy) = origin;
    let (w, h) = (image.width(), image.height());
    let fits = |o: usize, dim: usize| {
        if dim < tile_size {
            o == 0
        } else {
            o + tile_size <= dim
        }
    };
    if tile_size == 0 || !fits(ox, w) || !fits(oy, h) {
        return Err(Error::TileNotInGrid { x: ox, y: oy });
    }
    let src = image.data();
    let mut data = Vec::with_capacity(tile_size * tile_size * 3);
    for ty in 0..tile_size {
        let sy = reflect(oy + ty, h);
        let row = &src[sy * w * 3..(sy + 1) * w * 3];
        if ox + tile_size <= w {
            data.extend_from_slice(&row[ox * 3..(ox + tile_size) * 3]);
        } else {
            for tx in 0..tile_size {
                let sx = reflect(ox + tx, w);
                data.extend_from_slice(&row[sx * 3..sx * 3 + 3]);
            }
        }
    }
    RgbImage::new(tile_size, tile_size, data)
}

/// Per-pixel arithmetic mean of all tile predictions covering the pixel.
///
/// Tiles are folded in grid order with a running mean, so the result is
/// bit-reproducible and a constant input is returned exactly. Pixels that
/// fall in the reflect-padded region are ignored.
pub fn aggregate(tile_maps: &[ProbMap], grid: &TileGrid) -> Result<ProbMap> {
    if tile_maps.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} tile maps for {} grid origins",
            tile_maps.len(),
            grid.len()
        )));
    }
    let mut acc = TileAccumulator::new(grid);
    for map in tile_maps {
        acc.push(map)?;
    }
    acc.finish()
}

/// Streaming form of [`aggregate`]: tiles are pushed one at a time in grid
/// order, so a caller never needs to hold every tile map at once.
#[derive(Debug, Clone)]
pub struct TileAccumulator<'a> {
    grid: &'a TileGrid,
    origins: Vec<(usize, usize)>,
    next: usize,
    mean: Vec<f64>,
    count: Vec<u32>,
}

impl<'a> TileAccumulator<'a> {
    pub fn new(grid: &'a TileGrid) -> Self {
        let n = grid.height * grid.width;
        Self {
            grid,
            origins: grid.origins(),
            next: 0,
            mean: vec![0.0; n],
            count: vec![0; n],
        }
    }

    /// Folds in the prediction for the next origin in grid order.
    pub fn push(&mut self, map: &ProbMap) -> Result<()> {
        let t = self.grid.tile_size;
        if !map.same_dims(t, t) {
            return Err(Error::DimensionMismatch(format!(
                "tile map is {}x{}, expected {t}x{t}",
                map.height(),
                map.width()
            )));
        }
        let &(ox, oy) = self.origins.get(self.next).ok_or_else(|| {
            Error::DimensionMismatch(format!(
                "more than {} tile maps for the grid",
                self.origins.len()
            ))
        })?;
        self.next += 1;
        let (h, w) = (self.grid.height, self.grid.width);
        let vals = map.values();
        let rows = t.min(h - oy);
        let cols = t.min(w - ox);
        for ty in 0..rows {
            let dst = (oy + ty) * w + ox;
            let src = ty * t;
            for tx in 0..cols {
                let k = &mut self.count[dst + tx];
                *k += 1;
                let m = &mut self.mean[dst + tx];
                *m += (vals[src + tx] - *m) / f64::from(*k);
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<ProbMap> {
        if self.next != self.origins.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} tile maps for {} grid origins",
                self.next,
                self.origins.len()
            )));
        }
        debug_assert!(self.count.iter().all(|&c| c > 0));
        let mut mean = self.mean;
        for m in &mut mean {
            *m = m.clamp(0.0, 1.0);
        }
        ProbMap::new(self.grid.height, self.grid.width, mean)
    }
}

/// Number of tiles covering each pixel, row-major.
pub fn coverage_counts(grid: &TileGrid) -> Vec<u32> {
    let (h, w, t) = (grid.height, grid.width, grid.tile_size);
    let mut count = vec![0u32; h * w];
    for (ox, oy) in grid.origins() {
        for y in oy..(oy + t).min(h) {
            for c in &mut count[y * w + ox..y * w + (ox + t).min(w)] {
                *c += 1;
            }
        }
    }
    count
}
