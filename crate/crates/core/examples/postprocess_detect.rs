//! Turns a probability map with a few blobs into point detections.

use mitoseg::postproc::{binarize, connected_components, detect, dilate, PostprocConfig};
use mitoseg::ProbMap;

fn main() -> mitoseg::Result<()> {
    let (h, w) = (96, 128);
    let blobs = [
        (20.0, 20.0, 5.0),
        (28.0, 24.0, 4.0),
        (90.0, 60.0, 6.0),
        (60.0, 80.0, 2.0),
    ];
    let values = (0..h * w)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            blobs
                .iter()
                .map(|&(bx, by, r)| (-((x - bx).powi(2) + (y - by).powi(2)) / (r * r)).exp())
                .fold(0.0, f64::max)
        })
        .collect();
    let map = ProbMap::new(h, w, values)?;

    let cfg = PostprocConfig::default();
    let raw = binarize(&map, cfg.binarize_threshold);
    let grown = dilate(&raw, cfg.dilation_radius);
    println!(
        "{} pixels above threshold, {} after dilation, {} components",
        raw.count(),
        grown.count(),
        connected_components(&grown, cfg.connectivity)
            .components
            .len()
    );
    for d in detect(&map, &cfg, "demo")? {
        println!("detection at ({:.1}, {:.1}) score {:.3}", d.x, d.y, d.score);
    }
    Ok(())
}
