//! Metrics checked against brute-force reference computations.

use gmm_ood::metrics::{auprc, auroc, fpr_at_tpr, percentile_threshold, ScoredPixels};
use proptest::prelude::*;

fn pairwise_auroc(scores: &[f64], ood: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if ood[i] && !ood[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn rank_by_rank_ap(scores: &[f64], ood: &[bool]) -> f64 {
    // selection-sort style ranking: repeatedly take the first maximum
    let mut taken = vec![false; scores.len()];
    let (mut tp, mut sum) = (0.0, 0.0);
    for rank in 1..=scores.len() {
        let mut best = None;
        for i in 0..scores.len() {
            if !taken[i] && best.is_none_or(|b: usize| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        if ood[b] {
            tp += 1.0;
            sum += tp / rank as f64;
        }
    }
    sum / ood.iter().filter(|&&o| o).count() as f64
}

fn enumerated_fpr(scores: &[f64], ood: &[bool], target: f64) -> f64 {
    let pos = ood.iter().filter(|&&o| o).count() as f64;
    let neg = ood.len() as f64 - pos;
    let mut best = f64::INFINITY;
    for &t in scores {
        let tp = (0..scores.len()).filter(|&i| ood[i] && scores[i] >= t).count() as f64;
        let fp = (0..scores.len()).filter(|&i| !ood[i] && scores[i] >= t).count() as f64;
        if tp / pos >= target {
            best = best.min(fp / neg);
        }
    }
    best
}

fn mixed_sample() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    proptest::collection::vec((0u8..12, any::<bool>()), 2..80)
        .prop_filter("both classes", |v| v.iter().any(|p| p.1) && v.iter().any(|p| !p.1))
        .prop_map(|v| {
            // coarse integer scores so ties are common
            (v.iter().map(|p| p.0 as f64 * 0.25).collect(), v.iter().map(|p| p.1).collect())
        })
}

proptest! {
    #[test]
    fn auroc_matches_pair_counting((scores, ood) in mixed_sample()) {
        let d = ScoredPixels::new(scores.clone(), ood.clone()).unwrap();
        prop_assert!((auroc(&d).unwrap() - pairwise_auroc(&scores, &ood)).abs() < 1e-12);
    }

    #[test]
    fn auprc_matches_rank_walk((scores, ood) in mixed_sample()) {
        let d = ScoredPixels::new(scores.clone(), ood.clone()).unwrap();
        prop_assert!((auprc(&d).unwrap() - rank_by_rank_ap(&scores, &ood)).abs() < 1e-12);
    }

    #[test]
    fn fpr_matches_threshold_enumeration((scores, ood) in mixed_sample(), target in 0.05f64..=1.0) {
        let d = ScoredPixels::new(scores.clone(), ood.clone()).unwrap();
        prop_assert_eq!(fpr_at_tpr(&d, target).unwrap(), enumerated_fpr(&scores, &ood, target));
    }

    #[test]
    fn auroc_flips_under_negation((scores, ood) in mixed_sample()) {
        let a = auroc(&ScoredPixels::new(scores.clone(), ood.clone()).unwrap()).unwrap();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let b = auroc(&ScoredPixels::new(neg, ood).unwrap()).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_invariant_to_monotone_transform((scores, ood) in mixed_sample()) {
        let d = ScoredPixels::new(scores.clone(), ood.clone()).unwrap();
        let t: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 1.0).collect();
        let e = ScoredPixels::new(t, ood).unwrap();
        prop_assert_eq!(auroc(&d).unwrap(), auroc(&e).unwrap());
        prop_assert_eq!(auprc(&d).unwrap(), auprc(&e).unwrap());
        prop_assert_eq!(fpr_at_tpr(&d, 0.95).unwrap(), fpr_at_tpr(&e, 0.95).unwrap());
    }

    #[test]
    fn percentile_flags_at_most_the_top_share(
        scores in proptest::collection::vec(0u16..50, 1..400),
        f in 0.01f64..0.5,
    ) {
        let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let t = percentile_threshold(&s, f).unwrap();
        let n = s.len();
        let top = (f * n as f64 + 1e-9).floor() as usize;
        prop_assert!(t.flagged() <= top);
        // everything flagged is above, everything else at or below
        for (v, m) in s.iter().zip(&t.mask) {
            prop_assert_eq!(*m, *v > t.threshold);
        }
    }
}

#[test]
fn percentile_distinct_counts() {
    for (n, expected) in [(100usize, 5usize), (10007, 500), (65536, 3276)] {
        // a permutation of 0..n so input order is irrelevant
        let scores: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64).collect();
        let t = percentile_threshold(&scores, 0.05).unwrap();
        assert_eq!(t.flagged(), expected, "n = {n}");
        assert_eq!(t.threshold, (n - expected - 1) as f64);
    }
}
