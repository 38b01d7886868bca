//! Detection matching and F1 reporting per held-out domain.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Annotation, Detection};
use crate::error::{Error, Result};

/// Default matching radius in pixels.
pub const DEFAULT_MATCH_RADIUS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub detection: usize,
    pub annotation: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub matched_pairs: Vec<MatchedPair>,
}

impl MatchResult {
    pub fn merge(&mut self, other: &MatchResult) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
    }
}

/// Greedy one-to-one matching: candidate pairs within `radius` are taken in
/// ascending distance (ties by detection index, then annotation index) when
/// both endpoints are still free.
pub fn match_detections(dets: &[Detection], gts: &[Annotation], radius: f64) -> MatchResult {
    let points: Vec<(f64, f64)> = dets.iter().map(|d| (d.x, d.y)).collect();
    let truth: Vec<(f64, f64)> = gts.iter().map(|g| (g.x, g.y)).collect();
    match_points(&points, &truth, radius)
}

/// [`match_detections`] on bare coordinates.
pub fn match_points(dets: &[(f64, f64)], gts: &[(f64, f64)], radius: f64) -> MatchResult {
    let mut candidates = Vec::new();
    for (i, d) in dets.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let dist = (d.0 - g.0).hypot(d.1 - g.1);
            if dist <= radius {
                candidates.push(MatchedPair {
                    detection: i,
                    annotation: j,
                    distance: dist,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.detection.cmp(&b.detection))
            .then(a.annotation.cmp(&b.annotation))
    });
    let mut det_used = vec![false; dets.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !det_used[c.detection] && !gt_used[c.annotation] {
            det_used[c.detection] = true;
            gt_used[c.annotation] = true;
            pairs.push(c);
        }
    }
    MatchResult {
        true_positives: pairs.len(),
        false_positives: dets.len() - pairs.len(),
        false_negatives: gts.len() - pairs.len(),
        matched_pairs: pairs,
    }
}

/// `(precision, recall, f1)`, each defined as 0 when its denominator is 0.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_f1: f64,
    pub std_f1: f64,
}

/// Per-domain metrics and the mean and population standard deviation of the
/// per-domain F1 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub domains: BTreeMap<String, DomainMetrics>,
    pub aggregate: Aggregate,
}

impl DomainReport {
    /// `mean ± std` with three decimals, e.g. `0.736 ± 0.063`.
    pub fn summary(&self) -> String {
        format_mean_std(self.aggregate.mean_f1, self.aggregate.std_f1)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:<16} {:>9} {:>9} {:>9} {:>6} {:>6} {:>6}",
            "domain", "precision", "recall", "f1", "tp", "fp", "fn"
        )
        .unwrap();
        for (name, m) in &self.domains {
            writeln!(
                out,
                "{:<16} {:>9.3} {:>9.3} {:>9.3} {:>6} {:>6} {:>6}",
                name, m.precision, m.recall, m.f1, m.tp, m.fp, m.fn_
            )
            .unwrap();
        }
        writeln!(out, "F1 across held-out domains: {}", self.summary()).unwrap();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.3} ± {std:.3}")
}

/// Pools counts per domain (micro average over slides), then summarizes the
/// per-domain F1 values.
pub fn leave_one_domain_out_report(
    per_slide_results: &[(String, MatchResult)],
) -> Result<DomainReport> {
    if per_slide_results.is_empty() {
        return Err(Error::EmptyInput("no per-slide results to report".into()));
    }
    let mut pooled: BTreeMap<String, MatchResult> = BTreeMap::new();
    for (domain, result) in per_slide_results {
        pooled.entry(domain.clone()).or_default().merge(result);
    }
    let domains: BTreeMap<String, DomainMetrics> = pooled
        .into_iter()
        .map(|(name, r)| {
            let (precision, recall, f1) =
                f1_from_counts(r.true_positives, r.false_positives, r.false_negatives);
            (
                name,
                DomainMetrics {
                    precision,
                    recall,
                    f1,
                    tp: r.true_positives,
                    fp: r.false_positives,
                    fn_: r.false_negatives,
                },
            )
        })
        .collect();
    let f1s: Vec<f64> = domains.values().map(|m| m.f1).collect();
    let (mean_f1, std_f1) = mean_and_population_std(&f1s);
    Ok(DomainReport {
        domains,
        aggregate: Aggregate { mean_f1, std_f1 },
    })
}

pub fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_detections() {
        let r = match_points(&[], &[(1.0, 1.0), (5.0, 5.0), (9.0, 9.0)], 30.0);
        assert_eq!(
            (r.true_positives, r.false_positives, r.false_negatives),
            (0, 0, 3)
        );
    }

    #[test]
    fn exact_hit() {
        let r = match_points(&[(10.0, 10.0)], &[(10.0, 10.0)], 30.0);
        assert_eq!(r.true_positives, 1);
        assert_eq!(r.matched_pairs[0].distance, 0.0);
    }

    #[test]
    fn crossing_configuration() {
        // d1 is 5 px from g1 and 10 px from g2; d2 is 8 px from g2
        let g1 = (0.0, 0.0);
        let g2 = (15.0, 0.0);
        let d1 = (5.0, 0.0);
        let d2 = (23.0, 0.0);
        let r = match_points(&[d1, d2], &[g1, g2], 30.0);
        assert_eq!(r.true_positives, 2);
        let pairs: Vec<(usize, usize)> = r
            .matched_pairs
            .iter()
            .map(|p| (p.detection, p.annotation))
            .collect();
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn f1_counts() {
        let (p, r, f) = f1_from_counts(2, 1, 1);
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
        assert!((r - 2.0 / 3.0).abs() < 1e-15);
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_from_counts(0, 0, 0), (0.0, 0.0, 0.0));
        assert_eq!(f1_from_counts(5, 0, 0), (1.0, 1.0, 1.0));
    }

    fn counts(tp: usize, fp: usize, fn_: usize) -> MatchResult {
        MatchResult {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            matched_pairs: vec![],
        }
    }

    #[test]
    fn report_single_domain() {
        let r = leave_one_domain_out_report(&[("a".into(), counts(2, 1, 1))]).unwrap();
        assert!((r.aggregate.mean_f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.aggregate.std_f1, 0.0);
    }

    #[test]
    fn report_two_domains() {
        // f1 0.6: tp 3, fp 2, fn 2; f1 0.8: tp 4, fp 1, fn 1
        let r = leave_one_domain_out_report(&[
            ("a".into(), counts(3, 2, 2)),
            ("b".into(), counts(4, 1, 1)),
        ])
        .unwrap();
        assert!((r.aggregate.mean_f1 - 0.7).abs() < 1e-12);
        assert!((r.aggregate.std_f1 - 0.1).abs() < 1e-12);
        assert_eq!(r.summary(), "0.700 ± 0.100");
    }

    #[test]
    fn report_pools_slides_within_domain() {
        let r = leave_one_domain_out_report(&[
            ("a".into(), counts(1, 0, 1)),
            ("a".into(), counts(1, 1, 0)),
        ])
        .unwrap();
        let a = &r.domains["a"];
        assert_eq!((a.tp, a.fp, a.fn_), (2, 1, 1));
    }

    #[test]
    fn report_format_exemplars() {
        assert_eq!(format_mean_std(0.736, 0.063), "0.736 ± 0.063");
        assert_eq!(format_mean_std(0.656, 0.094), "0.656 ± 0.094");
        assert_eq!(format_mean_std(0.71, 0.073), "0.710 ± 0.073");
    }

    #[test]
    fn report_needs_input() {
        assert!(leave_one_domain_out_report(&[]).is_err());
    }

    #[test]
    fn metrics_json_shape() {
        let r = leave_one_domain_out_report(&[("a".into(), counts(1, 0, 0))]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["domains"]["a"]["fn"], 0);
        assert_eq!(v["aggregate"]["mean_f1"], 1.0);
    }
}
