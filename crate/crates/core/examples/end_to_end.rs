//! Writes a synthetic dataset, detects figures with an ensemble and scores
//! the detections per domain.
//!
//! `cargo run --release --example end_to_end [DIR]`

use mitoseg::network::VmUnetConfig;
use mitoseg::pipeline::{
    detect_dataset, evaluate_dataset, PredictorSpec, RunConfig, SyntheticDataset, WeightSource,
};
use mitoseg::tiling::TilingConfig;

fn main() -> mitoseg::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mitoseg_end_to_end"));
    let manifest = SyntheticDataset {
        slides: 6,
        domains: 3,
        height: 512,
        width: 512,
        annotations_per_slide: 10,
        seed: 1,
        ..SyntheticDataset::default()
    }
    .write(&dir)?;
    println!("dataset in {}", dir.display());

    let oracle = RunConfig::default();
    let dets = detect_dataset(&manifest, &oracle)?;
    println!("oracle: {} detections", dets.len());
    print!(
        "{}",
        evaluate_dataset(&dets, &manifest, oracle.match_radius)?.render()
    );

    // same slides with an untrained network averaged in
    let mixed = RunConfig {
        tiling: TilingConfig::new(128, 0.5)?,
        ensemble: vec![
            PredictorSpec::Network {
                weights: WeightSource::Seeded,
                config: VmUnetConfig::desk(),
            },
            PredictorSpec::Oracle { radius: 10 },
        ],
        ..RunConfig::default()
    };
    let dets = detect_dataset(&manifest, &mixed)?;
    println!("random network + oracle: {} detections", dets.len());
    print!(
        "{}",
        evaluate_dataset(&dets, &manifest, mixed.match_radius)?.render()
    );
    Ok(())
}
