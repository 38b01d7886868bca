//! Labels tiles of a synthetic slide and draws class-balanced batches.

use mitoseg::pipeline::{build_balanced_batches, label_tiles, SyntheticDataset};
use mitoseg::tiling::{plan_tiles, TilingConfig};

fn main() -> mitoseg::Result<()> {
    let (manifest, _) = SyntheticDataset {
        slides: 2,
        height: 1024,
        width: 1024,
        annotations_per_slide: 8,
        ..SyntheticDataset::default()
    }
    .build()?;
    let grid = plan_tiles(1024, 1024, &TilingConfig::new(128, 0.5)?)?;
    let tiles: Vec<_> = manifest
        .slides
        .iter()
        .flat_map(|s| label_tiles(s, &grid))
        .collect();
    let positives = tiles.iter().filter(|t| t.is_positive).count();
    println!("{} tiles, {positives} positive", tiles.len());

    let batches = build_balanced_batches(&tiles, 24, 7)?;
    println!("{} batches of 24", batches.len());
    for (i, b) in batches.iter().take(3).enumerate() {
        let pos = b.iter().filter(|t| t.is_positive).count();
        let first = &b[0];
        println!(
            "batch {i}: {pos} positive, first tile {} at {:?}",
            first.slide_id, first.origin
        );
    }
    Ok(())
}
