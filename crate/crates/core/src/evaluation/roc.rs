use crate::error::{GzslError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RocPoint {
    /// Instances with `score >= threshold` are called positive.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Starts at (0, 0) with an infinite threshold and ends at (1, 1).
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC of `scores` against the positive flags, one point per distinct score.
///
/// The trapezoid area is accumulated in integer counts, so tied scores earn
/// half credit and the AUC is exactly the Mann-Whitney pair statistic.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<RocCurve> {
    if scores.len() != positive.len() {
        return Err(GzslError::InvalidArgument(format!(
            "{} scores for {} labels",
            scores.len(),
            positive.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(GzslError::InvalidArgument(format!(
            "score {s} is not a number"
        )));
    }
    let n_pos = positive.iter().filter(|&&p| p).count() as u64;
    let n_neg = positive.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(GzslError::InvalidArgument(
            "ROC needs both positive and negative instances".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the area in units of one positive-negative pair
    let mut twice_area: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let (prev_tp, prev_fp) = (tp, fp);
        while i < order.len() && scores[order[i]] == threshold {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += ((fp - prev_fp) as u128) * ((tp + prev_tp) as u128);
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    let auc = twice_area as f64 / (2 * n_pos as u128 * n_neg as u128) as f64;
    Ok(RocCurve { points, auc })
}
