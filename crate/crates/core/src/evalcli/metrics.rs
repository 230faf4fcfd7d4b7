use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::check_two_classes;

/// Detection quality with inliers as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auroc: f64,
}

/// Area under the ROC curve as the Mann–Whitney statistic with midranks
/// for ties: `P(s_in > s_out) + ½ P(s_in = s_out)`.
pub fn auroc(scores: &[f64], is_inlier: &[bool]) -> Result<f64> {
    let pos = check_two_classes(scores, is_inlier)?;
    let neg = scores.len() - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their average.
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| is_inlier[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Threshold metrics at `log_gamma` (score ≥ threshold means inlier) plus
/// the threshold-free AUROC.
pub fn compute_metrics(scores: &[f64], is_inlier: &[bool], log_gamma: f64) -> Result<Metrics> {
    let pos = check_two_classes(scores, is_inlier)?;
    if !log_gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("threshold {log_gamma} is not finite")));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    for (&s, &l) in scores.iter().zip(is_inlier) {
        if s >= log_gamma {
            if l {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = tp as f64 / pos as f64;
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(Metrics { precision, recall, f1, auroc: auroc(scores, is_inlier)? })
}
