//! Segmentation quality measures.
//!
//! Per-scan: overall face accuracy plus IoU and Dice (DSC) for every
//! class that appears in either the prediction or the truth, macro-
//! averaged without class weighting. Across scans: unweighted means
//! within jaw groups, since per-scan difficulty varies and a big scan
//! should not drown out a small one.

use serde::Serialize;
use thiserror::Error;

use crate::classes::{Jaw, NUM_CLASSES};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction has {pred} labels but truth has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("empty label sequence")]
    Empty,
    #[error("label {label} out of range at position {index}")]
    OutOfRange { index: usize, label: u8 },
}

/// Intersection-over-union and Dice for one class.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClassMetrics {
    pub class: u8,
    pub iou: f64,
    pub dsc: f64,
    /// Faces with this class in the truth.
    pub support: usize,
}

/// One scan's scores.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub n: usize,
    pub accuracy: f64,
    /// Classes present in truth or prediction, ascending by id.
    pub per_class: Vec<ClassMetrics>,
    /// Macro mean over `per_class`.
    pub mean_iou: f64,
    /// Macro mean over `per_class`.
    pub mean_dsc: f64,
}

/// Score a prediction against ground truth, face by face.
pub fn evaluate(pred: &[u8], truth: &[u8]) -> Result<MetricReport, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    for (index, &label) in pred.iter().chain(truth.iter()).enumerate() {
        if label as usize >= NUM_CLASSES {
            return Err(MetricsError::OutOfRange {
                index: index % pred.len(),
                label,
            });
        }
    }

    let n = truth.len();
    let mut correct = 0usize;
    let mut tp = [0usize; NUM_CLASSES];
    let mut fp = [0usize; NUM_CLASSES];
    let mut fn_ = [0usize; NUM_CLASSES];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            correct += 1;
            tp[p as usize] += 1;
        } else {
            fp[p as usize] += 1;
            fn_[t as usize] += 1;
        }
    }

    let mut per_class = Vec::new();
    for c in 0..NUM_CLASSES {
        let (tp, fp, fn_) = (tp[c], fp[c], fn_[c]);
        if tp + fp + fn_ == 0 {
            continue; // class absent from both sequences
        }
        let iou = tp as f64 / (tp + fp + fn_) as f64;
        let dsc = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
        per_class.push(ClassMetrics {
            class: c as u8,
            iou,
            dsc,
            support: tp + fn_,
        });
    }
    let k = per_class.len() as f64;
    Ok(MetricReport {
        n,
        accuracy: correct as f64 / n as f64,
        mean_iou: per_class.iter().map(|m| m.iou).sum::<f64>() / k,
        mean_dsc: per_class.iter().map(|m| m.dsc).sum::<f64>() / k,
        per_class,
    })
}

/// One evaluated scan, tagged for grouping.
#[derive(Debug, Clone, Serialize)]
pub struct ScanEval {
    pub name: String,
    pub jaw: Jaw,
    pub report: MetricReport,
}

/// Unweighted means over a group of scans.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GroupStats {
    pub scans: usize,
    pub accuracy: f64,
    pub mean_iou: f64,
    pub mean_dsc: f64,
}

fn group_stats<'a>(reports: impl Iterator<Item = &'a MetricReport>) -> Option<GroupStats> {
    let mut stats = GroupStats {
        scans: 0,
        accuracy: 0.0,
        mean_iou: 0.0,
        mean_dsc: 0.0,
    };
    for r in reports {
        stats.scans += 1;
        stats.accuracy += r.accuracy;
        stats.mean_iou += r.mean_iou;
        stats.mean_dsc += r.mean_dsc;
    }
    if stats.scans == 0 {
        return None;
    }
    let k = stats.scans as f64;
    stats.accuracy /= k;
    stats.mean_iou /= k;
    stats.mean_dsc /= k;
    Some(stats)
}

/// Group scans into (label, stats) rows: one per jaw side present, plus
/// an "all" row.
pub fn summarize(scans: &[ScanEval]) -> Vec<(String, GroupStats)> {
    let mut rows = Vec::new();
    for (label, jaw) in [("mandible", Jaw::Mandible), ("maxillary", Jaw::Maxillary)] {
        if let Some(stats) = group_stats(
            scans
                .iter()
                .filter(|s| s.jaw == jaw)
                .map(|s| &s.report),
        ) {
            rows.push((label.to_string(), stats));
        }
    }
    if let Some(stats) = group_stats(scans.iter().map(|s| &s.report)) {
        rows.push(("all".to_string(), stats));
    }
    rows
}

/// Fixed-width text table of grouped results, percentages to two
/// decimals.
pub fn format_table(rows: &[(String, GroupStats)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>6} {:>10} {:>10} {:>10}\n",
        "group", "scans", "acc(%)", "miou(%)", "dsc(%)"
    ));
    for (label, s) in rows {
        out.push_str(&format!(
            "{:<12} {:>6} {:>10.2} {:>10.2} {:>10.2}\n",
            label,
            s.scans,
            100.0 * s.accuracy,
            100.0 * s.mean_iou,
            100.0 * s.mean_dsc,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example_is_exact() {
        let report = evaluate(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(report.accuracy, 0.75);
        assert!((report.mean_iou - 7.0 / 12.0).abs() < 1e-12);
        assert!((report.mean_dsc - 11.0 / 15.0).abs() < 1e-12);
        assert_eq!(report.per_class.len(), 2);
        assert_eq!(report.per_class[0].class, 0);
        assert!((report.per_class[0].iou - 0.5).abs() < 1e-12);
        assert!((report.per_class[1].iou - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_disjoint_predictions() {
        let truth = [3u8, 3, 7, 7, 0];
        let perfect = evaluate(&truth, &truth).unwrap();
        assert_eq!(perfect.accuracy, 1.0);
        assert_eq!(perfect.mean_iou, 1.0);
        assert_eq!(perfect.mean_dsc, 1.0);

        let disjoint = evaluate(&[1, 1, 2, 2, 2], &[3, 3, 4, 4, 4]).unwrap();
        assert_eq!(disjoint.accuracy, 0.0);
        assert_eq!(disjoint.mean_iou, 0.0);
        assert_eq!(disjoint.mean_dsc, 0.0);
    }

    #[test]
    fn dice_is_determined_by_iou() {
        // DSC = 2*IoU / (1 + IoU), a pure algebraic identity.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let n = rng.random_range(1..60);
            let pred: Vec<u8> = (0..n).map(|_| rng.random_range(0..33) as u8).collect();
            let truth: Vec<u8> = (0..n).map(|_| rng.random_range(0..33) as u8).collect();
            let report = evaluate(&pred, &truth).unwrap();
            for m in &report.per_class {
                let expected = 2.0 * m.iou / (1.0 + m.iou);
                assert!(
                    (m.dsc - expected).abs() < 1e-12,
                    "class {}: dsc {} vs 2iou/(1+iou) {}",
                    m.class,
                    m.dsc,
                    expected
                );
            }
        }
    }

    #[test]
    fn input_validation() {
        assert!(matches!(
            evaluate(&[0, 1], &[0]),
            Err(MetricsError::LengthMismatch { pred: 2, truth: 1 })
        ));
        assert!(matches!(evaluate(&[], &[]), Err(MetricsError::Empty)));
        assert!(matches!(
            evaluate(&[33], &[0]),
            Err(MetricsError::OutOfRange { .. })
        ));
    }

    #[test]
    fn pair_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 40;
        let pred: Vec<u8> = (0..n).map(|_| rng.random_range(0..5) as u8).collect();
        let truth: Vec<u8> = (0..n).map(|_| rng.random_range(0..5) as u8).collect();
        let base = evaluate(&pred, &truth).unwrap();

        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let pred2: Vec<u8> = idx.iter().map(|&i| pred[i]).collect();
        let truth2: Vec<u8> = idx.iter().map(|&i| truth[i]).collect();
        let shuffled = evaluate(&pred2, &truth2).unwrap();

        assert_eq!(base.accuracy, shuffled.accuracy);
        assert_eq!(base.mean_iou, shuffled.mean_iou);
        assert_eq!(base.mean_dsc, shuffled.mean_dsc);
    }

    #[test]
    fn grouping_and_table() {
        let mk = |name: &str, jaw, acc: f64| ScanEval {
            name: name.into(),
            jaw,
            report: MetricReport {
                n: 4,
                accuracy: acc,
                per_class: vec![],
                mean_iou: acc,
                mean_dsc: acc,
            },
        };
        let scans = vec![
            mk("a", Jaw::Mandible, 0.9),
            mk("b", Jaw::Mandible, 0.7),
            mk("c", Jaw::Maxillary, 1.0),
        ];
        let rows = summarize(&scans);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].0, "mandible");
        assert!((rows[0].1.accuracy - 0.8).abs() < 1e-12);
        assert_eq!(rows[1].0, "maxillary");
        assert_eq!(rows[1].1.scans, 1);
        assert_eq!(rows[2].0, "all");
        assert!((rows[2].1.accuracy - 2.6 / 3.0).abs() < 1e-12);

        let table = format_table(&rows);
        assert!(table.contains("mandible"));
        assert!(table.contains("80.00"));
    }
}
