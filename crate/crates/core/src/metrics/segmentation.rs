//! Intersection-over-union for label grids.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MiouResult {
    pub miou: f64,
    /// `None` for classes absent from both prediction and ground truth.
    pub per_class: Vec<Option<f64>>,
}

/// Mean IoU over non-ignored pixels; classes absent from both grids are left
/// out of the mean.
pub fn miou(pred: &[u32], gt: &[u32], num_classes: usize, ignore: &[bool]) -> Result<MiouResult> {
    if pred.len() != gt.len() || ignore.len() != gt.len() {
        return Err(Error::shape(format!(
            "pred ({}), gt ({}) and ignore mask ({}) differ in length",
            pred.len(),
            gt.len(),
            ignore.len()
        )));
    }
    let mut tp = vec![0u64; num_classes];
    let mut fp = vec![0u64; num_classes];
    let mut fn_ = vec![0u64; num_classes];
    for i in 0..gt.len() {
        if ignore[i] {
            continue;
        }
        let (p, g) = (pred[i] as usize, gt[i] as usize);
        if p >= num_classes || g >= num_classes {
            return Err(Error::invalid(format!(
                "label {} at pixel {i} outside 0..{num_classes}",
                p.max(g)
            )));
        }
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = (0..num_classes)
        .map(|c| {
            let denom = tp[c] + fp[c] + fn_[c];
            (denom > 0).then(|| tp[c] as f64 / denom as f64)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::UndefinedMetric {
            metrics: "miou",
            reason: "no class present in prediction or ground truth".into(),
        });
    }
    Ok(MiouResult {
        miou: present.iter().sum::<f64>() / present.len() as f64,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_cases() {
        let all = [false; 4];
        assert_eq!(miou(&[0, 1, 1, 0], &[0, 1, 1, 0], 2, &all).unwrap().miou, 1.0);
        assert_eq!(miou(&[1, 1, 0, 0], &[0, 0, 1, 1], 2, &all).unwrap().miou, 0.0);
        let r = miou(&[0, 1, 1, 1], &[0, 0, 1, 1], 2, &all).unwrap();
        assert_eq!(r.per_class, vec![Some(0.5), Some(2.0 / 3.0)]);
        assert!((r.miou - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn absent_classes_excluded() {
        let r = miou(&[0, 0], &[0, 0], 3, &[false, false]).unwrap();
        assert_eq!(r.per_class, vec![Some(1.0), None, None]);
        assert_eq!(r.miou, 1.0);
        assert!(miou(&[0], &[0], 1, &[true]).is_err());
        assert!(miou(&[0], &[0, 1], 2, &[false]).is_err());
        assert!(miou(&[5], &[0], 2, &[false]).is_err());
    }

    proptest! {
        #[test]
        fn ignored_pixels_never_matter(
            pairs in proptest::collection::vec((0u32..4, 0u32..4, any::<bool>()), 1..60),
            noise in proptest::collection::vec(0u32..4, 60),
        ) {
            let pred: Vec<u32> = pairs.iter().map(|p| p.0).collect();
            let gt: Vec<u32> = pairs.iter().map(|p| p.1).collect();
            let ignore: Vec<bool> = pairs.iter().map(|p| p.2).collect();
            let mut pred2 = pred.clone();
            let mut gt2 = gt.clone();
            for i in 0..pred.len() {
                if ignore[i] {
                    pred2[i] = noise[i];
                    gt2[i] = noise[(i + 7) % noise.len()];
                }
            }
            let a = miou(&pred, &gt, 4, &ignore);
            let b = miou(&pred2, &gt2, 4, &ignore);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "ignored pixels changed definedness"),
            }
        }
    }
}
