//! Matches detections to annotations and reports per-domain F1.

use mitoseg::eval::{leave_one_domain_out_report, match_points, DEFAULT_MATCH_RADIUS};

fn main() -> mitoseg::Result<()> {
    let slides = [
        (
            "scanner_a",
            vec![(10.0, 10.0), (200.0, 50.0)],
            vec![(14.0, 12.0), (400.0, 400.0)],
        ),
        ("scanner_a", vec![(50.0, 50.0)], vec![(52.0, 49.0)]),
        (
            "scanner_b",
            vec![(80.0, 80.0), (120.0, 90.0)],
            vec![(81.0, 85.0), (118.0, 92.0)],
        ),
        (
            "scanner_c",
            vec![(30.0, 30.0)],
            vec![(75.0, 30.0), (31.0, 29.0), (300.0, 3.0)],
        ),
    ];
    let mut results = Vec::new();
    for (domain, truth, dets) in &slides {
        let m = match_points(dets, truth, DEFAULT_MATCH_RADIUS);
        for p in &m.matched_pairs {
            println!(
                "{domain}: detection {} -> annotation {} at {:.2} px",
                p.detection, p.annotation, p.distance
            );
        }
        results.push((domain.to_string(), m));
    }
    let report = leave_one_domain_out_report(&results)?;
    print!("{}", report.render());
    println!("{}", report.to_json());
    Ok(())
}
