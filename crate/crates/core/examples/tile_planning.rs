//! Plans overlapping tiles for a slide and averages per-tile predictions.
//!
//! `cargo run --example tile_planning -- 1000 1400`

use mitoseg::tiling::{coverage_counts, plan_tiles, TileAccumulator, TilingConfig};
use mitoseg::ProbMap;

fn main() -> mitoseg::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>());
    let height = args.next().and_then(Result::ok).unwrap_or(1000);
    let width = args.next().and_then(Result::ok).unwrap_or(1400);

    let cfg = TilingConfig::default();
    let grid = plan_tiles(height, width, &cfg)?;
    println!(
        "{height}x{width}, tile {} stride {}: {} tiles",
        grid.tile_size,
        grid.stride,
        grid.len()
    );
    println!("x origins: {:?}", grid.x_origins);
    println!("y origins: {:?}", grid.y_origins);

    let counts = coverage_counts(&grid);
    let (lo, hi) = counts
        .iter()
        .fold((u32::MAX, 0), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    println!("tiles per pixel: {lo}..={hi}");

    // fake predictions: each tile reports its own column index as probability
    let mut acc = TileAccumulator::new(&grid);
    for (x, _) in grid.origins() {
        let p = x as f64 / width as f64;
        acc.push(&ProbMap::constant(grid.tile_size, grid.tile_size, p)?)?;
    }
    let merged = acc.finish()?;
    println!(
        "merged map {}x{}, left edge {:.3}, right edge {:.3}",
        merged.height(),
        merged.width(),
        merged.get(0, 0),
        merged.get(width - 1, 0)
    );
    Ok(())
}
