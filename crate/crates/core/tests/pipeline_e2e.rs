use mitoseg::dataset::format_detections;
use mitoseg::network::VmUnetConfig;
use mitoseg::pipeline::{
    build_balanced_batches, detect_dataset, evaluate_dataset, label_tiles, PredictorSpec,
    RunConfig, SyntheticDataset, WeightSource,
};
use mitoseg::tiling::{plan_tiles, TilingConfig};

fn small_dataset(dir: &std::path::Path) -> mitoseg::DatasetManifest {
    SyntheticDataset {
        slides: 4,
        domains: 2,
        height: 384,
        width: 320,
        annotations_per_slide: 6,
        seed: 17,
        ..SyntheticDataset::default()
    }
    .write(dir)
    .unwrap()
}

#[test]
fn oracle_detections_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(dir.path());
    let dets = detect_dataset(&manifest, &RunConfig::default()).unwrap();
    assert_eq!(dets.len(), manifest.annotation_count());
    let report = evaluate_dataset(&dets, &manifest, 30.0).unwrap();
    assert_eq!(report.domains.len(), 2);
    for m in report.domains.values() {
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        assert_eq!(m.fp + m.fn_, 0);
    }
    assert_eq!(report.aggregate.mean_f1, 1.0);
    assert_eq!(report.aggregate.std_f1, 0.0);
}

#[test]
fn offset_detections_miss_at_small_radius() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(dir.path());
    let mut dets = detect_dataset(&manifest, &RunConfig::default()).unwrap();
    for d in &mut dets {
        d.x += 1.0;
    }
    let report = evaluate_dataset(&dets, &manifest, 0.5).unwrap();
    assert!(report.domains.values().all(|m| m.f1 == 0.0));
    let report = evaluate_dataset(&dets, &manifest, 30.0).unwrap();
    assert!(report.domains.values().all(|m| m.f1 == 1.0));
}

#[test]
fn constant_zero_predicts_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(dir.path());
    let cfg = RunConfig {
        ensemble: vec![PredictorSpec::Constant(0.0)],
        ..RunConfig::default()
    };
    assert!(detect_dataset(&manifest, &cfg).unwrap().is_empty());
}

#[test]
fn seeded_network_runs_are_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = SyntheticDataset {
        slides: 2,
        domains: 2,
        height: 160,
        width: 160,
        annotations_per_slide: 2,
        seed: 3,
        ..SyntheticDataset::default()
    }
    .write(dir.path())
    .unwrap();
    let cfg = RunConfig {
        tiling: TilingConfig::new(64, 0.5).unwrap(),
        ensemble: vec![
            PredictorSpec::Network {
                weights: WeightSource::Seeded,
                config: VmUnetConfig::desk(),
            },
            PredictorSpec::Oracle { radius: 10 },
        ],
        seed: 9,
        ..RunConfig::default()
    };
    let a = format_detections(&detect_dataset(&manifest, &cfg).unwrap());
    let b = format_detections(&detect_dataset(&manifest, &cfg).unwrap());
    assert_eq!(a, b);
}

#[test]
fn balanced_batches_from_a_slide() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(dir.path());
    let grid = plan_tiles(384, 320, &TilingConfig::new(64, 0.0).unwrap()).unwrap();
    let tiles: Vec<_> = manifest
        .slides
        .iter()
        .flat_map(|s| label_tiles(s, &grid))
        .collect();
    let positives = tiles.iter().filter(|t| t.is_positive).count();
    assert!(positives > 0 && positives < tiles.len());
    let a = build_balanced_batches(&tiles, 24, 5).unwrap();
    assert_eq!(a, build_balanced_batches(&tiles, 24, 5).unwrap());
    for b in &a {
        assert_eq!(b.iter().filter(|t| t.is_positive).count(), 12);
        assert_eq!(b.len(), 24);
    }
}
