//! Tile labels and class-balanced batch construction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::SlideEntry;
use crate::error::{Error, Result};
use crate::tiling::TileGrid;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TileSample {
    pub slide_id: String,
    pub origin: (usize, usize),
    pub is_positive: bool,
}

/// One sample per grid origin; positive when an annotation center lies
/// inside the tile window.
pub fn label_tiles(slide: &SlideEntry, grid: &TileGrid) -> Vec<TileSample> {
    let t = grid.tile_size as f64;
    grid.origins()
        .into_iter()
        .map(|(ox, oy)| {
            let (fx, fy) = (ox as f64, oy as f64);
            let is_positive = slide
                .annotations
                .iter()
                .any(|&[x, y]| x >= fx && x < fx + t && y >= fy && y < fy + t);
            TileSample {
                slide_id: slide.slide_id.clone(),
                origin: (ox, oy),
                is_positive,
            }
        })
        .collect()
}

/// Batches with exactly `batch_size / 2` positives and negatives.
///
/// The larger class is shuffled and split into half-batches, so each of its
/// samples appears once; the last half-batch is topped up by drawing from
/// that class again. The smaller class is drawn from a stream of fresh
/// shuffles, repeating samples as needed. Within a batch, positives come
/// first.
pub fn build_balanced_batches(
    tiles: &[TileSample],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Vec<TileSample>>> {
    if batch_size == 0 || !batch_size.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "batch_size must be even and positive, got {batch_size}"
        )));
    }
    let (pos, neg): (Vec<&TileSample>, Vec<&TileSample>) =
        tiles.iter().partition(|t| t.is_positive);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyInput(format!(
            "balanced batches need both classes, got {} positive and {} negative tiles",
            pos.len(),
            neg.len()
        )));
    }
    let half = batch_size / 2;
    let positives_major = pos.len() > neg.len();
    let (mut major, minor) = if positives_major {
        (pos, neg)
    } else {
        (neg, pos)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    major.shuffle(&mut rng);
    let n_batches = major.len().div_ceil(half);
    let shortfall = n_batches * half - major.len();
    let extra: Vec<&TileSample> = (0..shortfall)
        .map(|_| *major.choose(&mut rng).expect("class is not empty"))
        .collect();
    major.extend(extra);

    let mut minor_stream = Vec::with_capacity(n_batches * half);
    while minor_stream.len() < n_batches * half {
        let mut round = minor.clone();
        round.shuffle(&mut rng);
        minor_stream.extend(round);
    }

    Ok(major
        .chunks(half)
        .zip(minor_stream.chunks(half))
        .map(|(a, b)| {
            let (p, n) = if positives_major { (a, b) } else { (b, a) };
            p.iter().chain(n).map(|&t| t.clone()).collect()
        })
        .collect())
}
