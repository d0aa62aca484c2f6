//! Threshold-free OOD ranking metrics. OOD is the positive class and higher
//! scores mean "more OOD".

use crate::error::{Error, Result};

/// Parallel scores and ground-truth OOD flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPixels {
    scores: Vec<f64>,
    is_ood: Vec<bool>,
}

impl ScoredPixels {
    pub fn new(scores: Vec<f64>, is_ood: Vec<bool>) -> Result<Self> {
        if scores.len() != is_ood.len() {
            return Err(Error::shape(format!(
                "{} scores but {} labels",
                scores.len(),
                is_ood.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::invalid("scores must not be NaN"));
        }
        Ok(Self { scores, is_ood })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn is_ood(&self) -> &[bool] {
        &self.is_ood
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_ood(&self) -> usize {
        self.is_ood.iter().filter(|&&o| o).count()
    }

    pub fn n_id(&self) -> usize {
        self.len() - self.n_ood()
    }

    fn require_both_classes(&self) -> Result<(usize, usize)> {
        let (pos, neg) = (self.n_ood(), self.n_id());
        if pos == 0 || neg == 0 {
            return Err(Error::UndefinedMetric {
                metrics: "auroc, auprc, fpr95",
                reason: format!("need OOD and ID samples, got {pos} OOD and {neg} ID"),
            });
        }
        Ok((pos, neg))
    }

    /// Indices by descending score; equal scores keep input order.
    fn descending_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        idx
    }
}

/// Mann–Whitney AUROC: P(OOD score > ID score), ties counted as ½.
pub fn auroc(data: &ScoredPixels) -> Result<f64> {
    let (pos, neg) = data.require_both_classes()?;
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|&a, &b| data.scores[a].total_cmp(&data.scores[b]));

    // sum of mid-ranks (1-based) of the OOD samples
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let s = data.scores[idx[start]];
        let mut end = start;
        while end < idx.len() && data.scores[idx[end]] == s {
            end += 1;
        }
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let ood_in_group = idx[start..end].iter().filter(|&&i| data.is_ood[i]).count();
        rank_sum += mid_rank * ood_in_group as f64;
        start = end;
    }
    let (p, n) = (pos as f64, neg as f64);
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok((u / (p * n)).clamp(0.0, 1.0))
}

/// Average precision over the descending-score ranking (ties in input order).
pub fn auprc(data: &ScoredPixels) -> Result<f64> {
    let (pos, _) = data.require_both_classes()?;
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in data.descending_order().iter().enumerate() {
        if data.is_ood[i] {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / pos as f64)
}

/// Smallest FPR among thresholds `t` (flag when score ≥ t) whose TPR
/// reaches `target_tpr`.
pub fn fpr_at_tpr(data: &ScoredPixels, target_tpr: f64) -> Result<f64> {
    if !(target_tpr > 0.0 && target_tpr <= 1.0) {
        return Err(Error::invalid(format!("target TPR {target_tpr} not in (0, 1]")));
    }
    let (pos, neg) = data.require_both_classes()?;
    let order = data.descending_order();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut start = 0;
    while start < order.len() {
        let s = data.scores[order[start]];
        let mut end = start;
        while end < order.len() && data.scores[order[end]] == s {
            if data.is_ood[order[end]] {
                tp += 1;
            } else {
                fp += 1;
            }
            end += 1;
        }
        if tp as f64 / pos as f64 >= target_tpr {
            return Ok(fp as f64 / neg as f64);
        }
        start = end;
    }
    // lowest threshold flags everything: TPR = 1
    Ok(1.0)
}
