//! ROC analysis with anomalies as the positive class and higher scores meaning
//! "more anomalous".

use crate::detector::Label;
use crate::error::{invalid, Error, Result};

fn class_counts(labels: &[Label]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|l| l.is_anomaly()).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels(format!(
            "AUC needs both classes, got {pos} anomalies and {neg} normals"
        )));
    }
    Ok((pos, neg))
}

fn check_inputs(scores: &[f64], labels: &[Label]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(invalid("scores contain NaN"));
    }
    Ok(())
}

/// Probability that a random anomaly outscores a random normal point, ties
/// counting one half. Computed from tie-averaged ranks in `O(n log n)`.
pub fn auc_roc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k].is_anomaly()).count();
        pos_rank_sum += avg_rank * tied_pos as f64;
        i = j;
    }
    let u = pos_rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// ROC vertices `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one per distinct score.
pub fn roc_points(scores: &[f64], labels: &[Label]) -> Result<Vec<(f64, f64)>> {
    check_inputs(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let v = scores[order[i]];
        while i < order.len() && scores[order[i]] == v {
            if labels[order[i]].is_anomaly() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Area under a polyline by the trapezoid rule.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}
