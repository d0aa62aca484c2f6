//! OOD detection and segmentation metrics, the percentile OOD decision rule,
//! and the evaluation report format.

mod ranking;
mod segmentation;

pub use ranking::{auprc, auroc, fpr_at_tpr, ScoredPixels};
pub use segmentation::{miou, MiouResult};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of highest-scoring pixels flagged as OOD by default.
pub const DEFAULT_TOP_FRACTION: f64 = 0.05;

/// TPR at which the FPR is reported.
pub const FPR_TARGET_TPR: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct PercentileThreshold {
    pub threshold: f64,
    pub mask: Vec<bool>,
}

impl PercentileThreshold {
    pub fn flagged(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// 1-based rank of the `(1 − f)` nearest-rank quantile among `n` values:
/// `ceil((1 − f)·n) = n − floor(f·n)`, clamped to `1..=n`. The epsilon
/// absorbs `f·n` landing a hair under an integer.
fn nearest_rank(n: usize, top_fraction: f64) -> usize {
    let top = ((top_fraction * n as f64) + 1e-9).floor() as usize;
    (n - top.min(n)).clamp(1, n)
}

fn check_fraction(top_fraction: f64) -> Result<()> {
    if top_fraction > 0.0 && top_fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("top fraction {top_fraction} not in (0, 1)")))
    }
}

/// Exact multiset of scores, kept as value counts so large runs with few
/// distinct scores stay small. Merging is order-independent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreHistogram {
    counts: BTreeMap<OrderedScore, usize>,
    total: usize,
}

#[derive(Debug, Clone, Copy)]
struct OrderedScore(f64);

impl PartialEq for OrderedScore {
    fn eq(&self, other: &Self) -> bool {
        self.0.total_cmp(&other.0).is_eq()
    }
}

impl Eq for OrderedScore {}

impl Ord for OrderedScore {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for OrderedScore {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl ScoreHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, score: f64) -> Result<()> {
        if score.is_nan() {
            return Err(Error::invalid("scores must not be NaN"));
        }
        // + 0.0 folds −0.0 into 0.0
        *self.counts.entry(OrderedScore(score + 0.0)).or_insert(0) += 1;
        self.total += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ScoreHistogram) {
        for (k, c) in &other.counts {
            *self.counts.entry(*k).or_insert(0) += c;
        }
        self.total += other.total;
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Same threshold as [`percentile_threshold`] over the recorded scores.
    pub fn threshold(&self, top_fraction: f64) -> Result<f64> {
        check_fraction(top_fraction)?;
        if self.total == 0 {
            return Err(Error::invalid("percentile threshold needs at least one score"));
        }
        let rank = nearest_rank(self.total, top_fraction);
        let mut seen = 0;
        for (k, c) in &self.counts {
            seen += c;
            if seen >= rank {
                return Ok(k.0);
            }
        }
        unreachable!("rank never exceeds the total count")
    }
}

/// Nearest-rank `(1 − top_fraction)` quantile; scores strictly above it are
/// flagged, so ties at the threshold stay unflagged.
pub fn percentile_threshold(scores: &[f64], top_fraction: f64) -> Result<PercentileThreshold> {
    if scores.is_empty() {
        return Err(Error::invalid("percentile threshold needs at least one score"));
    }
    check_fraction(top_fraction)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores must not be NaN"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted[nearest_rank(sorted.len(), top_fraction) - 1];
    Ok(PercentileThreshold {
        threshold,
        mask: scores.iter().map(|&s| s > threshold).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub auprc: f64,
    pub fpr95: f64,
    pub miou: f64,
    pub per_class_iou: Vec<Option<f64>>,
    pub n_id: usize,
    pub n_ood: usize,
}

impl EvalReport {
    /// Ranking metrics from `scored`, segmentation metrics from `seg`.
    pub fn evaluate(scored: &ScoredPixels, seg: &MiouResult) -> Result<Self> {
        Ok(Self {
            auroc: auroc(scored)?,
            auprc: auprc(scored)?,
            fpr95: fpr_at_tpr(scored, FPR_TARGET_TPR)?,
            miou: seg.miou,
            per_class_iou: seg.per_class.clone(),
            n_id: scored.n_id(),
            n_ood: scored.n_ood(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Header plus one row; fractions with 6 decimals, absent IoUs empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("auroc,auprc,fpr95,miou,n_id,n_ood");
        for c in 0..self.per_class_iou.len() {
            let _ = write!(out, ",iou_{c}");
        }
        let _ = write!(
            out,
            "\n{:.6},{:.6},{:.6},{:.6},{},{}",
            self.auroc, self.auprc, self.fpr95, self.miou, self.n_id, self.n_ood
        );
        for iou in &self.per_class_iou {
            match iou {
                Some(v) => {
                    let _ = write!(out, ",{v:.6}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
        out
    }
}
