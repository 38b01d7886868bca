mod common;

use common::{brute_dilate, flood_fill_labels};
use mitoseg::postproc::{connected_components, detect, dilate, Connectivity, PostprocConfig};
use mitoseg::{BinaryMask, ProbMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> BinaryMask {
    let density = rng.gen_range(0.1..0.7);
    BinaryMask::new(h, w, (0..h * w).map(|_| rng.gen_bool(density)).collect()).unwrap()
}

#[test]
fn labeling_matches_flood_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..1000 {
        let mask = random_mask(&mut rng, 16, 16);
        for conn in [Connectivity::Four, Connectivity::Eight] {
            let got = connected_components(&mask, conn);
            let want = flood_fill_labels(&mask, conn);
            assert_eq!(got.labels, want);
            let n = want.iter().copied().max().unwrap_or(0) as usize;
            assert_eq!(got.components.len(), n);
            for c in &got.components {
                let area = want.iter().filter(|&&l| l == c.label).count();
                assert_eq!(c.area, area);
            }
        }
    }
}

#[test]
fn dilation_matches_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for r in 0..6 {
        for _ in 0..30 {
            let h = rng.gen_range(1..24);
            let w = rng.gen_range(1..24);
            let mut mask = BinaryMask::empty(h, w).unwrap();
            for _ in 0..rng.gen_range(0..5) {
                mask.set(rng.gen_range(0..w), rng.gen_range(0..h), true);
            }
            assert_eq!(dilate(&mask, r).bits(), brute_dilate(&mask, r).as_slice());
        }
    }
}

#[test]
fn single_pixel_disc_sizes() {
    let mut mask = BinaryMask::empty(9, 9).unwrap();
    mask.set(4, 4, true);
    assert_eq!(dilate(&mask, 1).count(), 5);
    assert_eq!(dilate(&mask, 2).count(), 13);
    assert_eq!(dilate(&mask, 0).count(), 1);
}

/// Two horizontal runs of `extent` pixels whose left ends are `gap` apart.
fn two_runs(extent: usize, gap: usize) -> BinaryMask {
    let w = gap + extent + 40;
    let mut mask = BinaryMask::empty(21, w).unwrap();
    for x in 0..extent {
        mask.set(20 + x, 10, true);
        mask.set(20 + gap + x, 10, true);
    }
    mask
}

#[test]
fn blobs_fuse_within_twice_radius_plus_extent() {
    for r in 1..7 {
        for extent in 1..5 {
            for gap in extent..2 * r + extent + 4 {
                let grown = dilate(&two_runs(extent, gap), r);
                for conn in [Connectivity::Four, Connectivity::Eight] {
                    let n = connected_components(&grown, conn).components.len();
                    let expect = if gap <= 2 * r + extent { 1 } else { 2 };
                    assert_eq!(n, expect, "r={r} extent={extent} gap={gap}");
                }
            }
        }
    }
}

#[test]
fn detection_at_bbox_center_with_peak_score() {
    let mut values = vec![0.0; 40 * 40];
    for y in 10..15 {
        for x in 20..27 {
            values[y * 40 + x] = 0.7;
        }
    }
    values[12 * 40 + 22] = 0.95;
    let map = ProbMap::new(40, 40, values).unwrap();
    let cfg = PostprocConfig {
        dilation_radius: 2,
        min_component_area: 1,
        ..PostprocConfig::default()
    };
    let dets = detect(&map, &cfg, "s").unwrap();
    assert_eq!(dets.len(), 1);
    assert_eq!((dets[0].x, dets[0].y), (23.0, 12.0));
    assert_eq!(dets[0].score, 0.95);

    let strict = PostprocConfig {
        min_component_area: 10_000,
        ..cfg
    };
    assert!(detect(&map, &strict, "s").unwrap().is_empty());
    assert!(detect(&ProbMap::constant(8, 8, 0.0).unwrap(), &cfg, "s")
        .unwrap()
        .is_empty());
}
