use std::collections::BTreeMap;

use crate::error::{GzslError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PerClassAccuracy {
    /// Unweighted mean over the classes that have instances.
    pub mean: f64,
    /// `(class id, accuracy)` for every class with at least one instance.
    pub per_class: Vec<(u32, f64)>,
    /// Classes of `class_set` with no instances in the evaluated split.
    pub excluded: Vec<u32>,
}

/// Average per-class top-1 accuracy.
///
/// Classes in `class_set` without any instance are left out of the mean and
/// listed in `excluded`.
pub fn per_class_top1(
    predictions: &[u32],
    truths: &[u32],
    class_set: &[u32],
) -> Result<PerClassAccuracy> {
    if predictions.len() != truths.len() {
        return Err(GzslError::InvalidArgument(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truths.len()
        )));
    }
    let mut tally: BTreeMap<u32, (usize, usize)> = class_set.iter().map(|&c| (c, (0, 0))).collect();
    for (&p, &t) in predictions.iter().zip(truths) {
        let entry = tally.get_mut(&t).ok_or_else(|| {
            GzslError::InvalidArgument(format!("true label {t} is not in the evaluated class set"))
        })?;
        entry.1 += 1;
        if p == t {
            entry.0 += 1;
        }
    }
    let mut per_class = Vec::new();
    let mut excluded = Vec::new();
    for (c, (correct, total)) in tally {
        if total == 0 {
            excluded.push(c);
        } else {
            per_class.push((c, correct as f64 / total as f64));
        }
    }
    if per_class.is_empty() {
        return Err(GzslError::InvalidArgument(
            "no class in the evaluated set has instances".into(),
        ));
    }
    let mean = per_class.iter().map(|p| p.1).sum::<f64>() / per_class.len() as f64;
    Ok(PerClassAccuracy {
        mean,
        per_class,
        excluded,
    })
}

/// `2·tr·ts / (tr + ts)`, and 0 when both are 0.
pub fn harmonic_mean(acc_tr: f64, acc_ts: f64) -> f64 {
    let sum = acc_tr + acc_ts;
    if sum == 0.0 {
        0.0
    } else {
        2.0 * acc_tr * acc_ts / sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_class_mean_not_per_instance() {
        // class 0: 99 instances all right, class 1: one instance wrong
        let mut truths = vec![0u32; 99];
        truths.push(1);
        let mut preds = vec![0u32; 99];
        preds.push(0);
        let acc = per_class_top1(&preds, &truths, &[0, 1]).unwrap();
        assert!((acc.mean - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_classes_one_and_a_half() {
        let acc = per_class_top1(&[0, 0, 1, 0], &[0, 0, 1, 1], &[0, 1]).unwrap();
        assert!((acc.mean - 0.75).abs() < 1e-15);
        assert_eq!(acc.per_class, vec![(0, 1.0), (1, 0.5)]);
        let all = per_class_top1(&[0, 1, 1], &[0, 1, 1], &[0, 1]).unwrap();
        assert_eq!(all.mean, 1.0);
    }

    #[test]
    fn empty_classes_are_excluded() {
        let acc = per_class_top1(&[0, 2], &[0, 0], &[0, 1]).unwrap();
        assert_eq!(acc.excluded, vec![1]);
        assert!((acc.mean - 0.5).abs() < 1e-15);
        assert!(per_class_top1(&[0], &[3], &[0, 1]).is_err());
        assert!(per_class_top1(&[], &[], &[0, 1]).is_err());
    }

    #[test]
    fn harmonic_mean_basics() {
        assert!((harmonic_mean(79.3, 43.7) - 56.3).abs() < 0.1);
        assert!((harmonic_mean(71.7, 61.2) - 66.0).abs() < 0.1);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
        assert_eq!(harmonic_mean(0.4, 0.0), 0.0);
        assert!((harmonic_mean(0.37, 0.37) - 0.37).abs() < 1e-15);
    }
}
