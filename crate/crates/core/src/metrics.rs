//! Confusion-matrix statistics, ROC curves, and the six goodness-of-fit
//! measures: overall accuracy, sensitivity, precision, specificity, F1, AUC.
//!
//! Ratios with a zero denominator are reported as `None` rather than coerced
//! to zero; aggregation layers skip and count them.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("labels must be binary")]
    NonBinary,
    #[error("scores require both classes present")]
    SingleClass,
    #[error("empty input")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix, MetricsError> {
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.iter().chain(y_pred).any(|&v| v > 1) {
        return Err(MetricsError::NonBinary);
    }
    let mut cm = ConfusionMatrix { tp: 0, fp: 0, fn_: 0, tn: 0 };
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 1) => cm.fp += 1,
            (1, 0) => cm.fn_ += 1,
            _ => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// The six GOF measures. `None` marks an undefined ratio (zero denominator)
/// or, for AUC, absent scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GofReport {
    pub oa: Option<f64>,
    pub sensitivity: Option<f64>,
    pub precision: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
}

pub const METRIC_NAMES: [&str; 6] = ["oa", "sensitivity", "precision", "specificity", "f1", "auc"];

impl GofReport {
    pub fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            "oa" => self.oa,
            "sensitivity" => self.sensitivity,
            "precision" => self.precision,
            "specificity" => self.specificity,
            "f1" => self.f1,
            "auc" => self.auc,
            _ => None,
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// GOF measures from a confusion matrix, plus AUC when `scored` supplies
/// the true labels and a score vector.
pub fn gof(cm: &ConfusionMatrix, scored: Option<(&[u8], &[f64])>) -> Result<GofReport, MetricsError> {
    if cm.total() == 0 {
        return Err(MetricsError::Empty);
    }
    let sensitivity = ratio(cm.tp, cm.tp + cm.fn_);
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let f1 = match (precision, sensitivity) {
        (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
        _ => None,
    };
    let auc = match scored {
        Some((y_true, scores)) => Some(auc(y_true, scores)?),
        None => None,
    };
    Ok(GofReport {
        oa: ratio(cm.tp + cm.tn, cm.total()),
        sensitivity,
        precision,
        specificity: ratio(cm.tn, cm.tn + cm.fp),
        f1,
        auc,
    })
}

/// Mann-Whitney AUC with tie correction:
/// (#concordant + 0.5 #tied) / (n1 * n0).
pub fn auc(y_true: &[u8], scores: &[f64]) -> Result<f64, MetricsError> {
    if y_true.len() != scores.len() {
        return Err(MetricsError::LengthMismatch(y_true.len(), scores.len()));
    }
    if y_true.iter().any(|&v| v > 1) {
        return Err(MetricsError::NonBinary);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricsError::NonBinary);
    }
    let pos: Vec<f64> = y_true.iter().zip(scores).filter(|(&t, _)| t == 1).map(|(_, &s)| s).collect();
    let neg: Vec<f64> = y_true.iter().zip(scores).filter(|(&t, _)| t == 0).map(|(_, &s)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(MetricsError::SingleClass);
    }
    let mut num = 0.0;
    for &sp in &pos {
        for &sn in &neg {
            if sp > sn {
                num += 1.0;
            } else if sp == sn {
                num += 0.5;
            }
        }
    }
    Ok(num / (pos.len() * neg.len()) as f64)
}

/// ROC staircase: thresholds at distinct scores, from (0,0) to (1,1).
pub fn roc_curve(y_true: &[u8], scores: &[f64]) -> Result<Vec<(f64, f64)>, MetricsError> {
    if y_true.len() != scores.len() {
        return Err(MetricsError::LengthMismatch(y_true.len(), scores.len()));
    }
    let n1 = y_true.iter().filter(|&&t| t == 1).count();
    let n0 = y_true.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        // consume all items sharing this score, then emit one vertex
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if y_true[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n0 as f64, tp as f64 / n1 as f64));
    }
    Ok(points)
}

/// Trapezoidal area under an ROC staircase.
pub fn roc_auc(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn confusion_hand_count() {
        let y_true = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let y_pred = [1, 1, 1, 0, 0, 0, 0, 0, 0, 1];
        let cm = confusion(&y_true, &y_pred).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 3, fn_: 2, tn: 4, fp: 1 });
    }

    #[test]
    fn confusion_perfect_and_anti() {
        let y = [0, 1, 1, 0, 1];
        let cm = confusion(&y, &y).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
        let flipped: Vec<u8> = y.iter().map(|&v| 1 - v).collect();
        let cm = confusion(&y, &flipped).unwrap();
        assert_eq!((cm.tp, cm.tn), (0, 0));
    }

    #[test]
    fn gof_defining_ratios() {
        let cm = ConfusionMatrix { tp: 3, fp: 1, fn_: 2, tn: 4 };
        let r = gof(&cm, None).unwrap();
        assert_abs_diff_eq!(r.oa.unwrap(), 0.70, epsilon = 1e-15);
        assert_abs_diff_eq!(r.sensitivity.unwrap(), 0.60, epsilon = 1e-15);
        assert_abs_diff_eq!(r.precision.unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(r.specificity.unwrap(), 0.80, epsilon = 1e-15);
        assert_abs_diff_eq!(r.f1.unwrap(), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gof_perfect_and_undefined() {
        let cm = ConfusionMatrix { tp: 5, fp: 0, fn_: 0, tn: 5 };
        let r = gof(&cm, None).unwrap();
        for m in ["oa", "sensitivity", "precision", "specificity", "f1"] {
            assert_eq!(r.get(m), Some(1.0), "{m}");
        }
        let cm = ConfusionMatrix { tp: 0, fp: 2, fn_: 0, tn: 4 };
        let r = gof(&cm, None).unwrap();
        assert_eq!(r.sensitivity, None);
    }

    #[test]
    fn auc_edges_and_pairs() {
        assert_abs_diff_eq!(auc(&[0, 1, 0, 1], &[0.3, 0.3, 0.3, 0.3]).unwrap(), 0.5);
        assert_abs_diff_eq!(auc(&[0, 0, 1, 1], &[0.1, 0.2, 0.8, 0.9]).unwrap(), 1.0);
        assert_abs_diff_eq!(auc(&[0, 0, 1, 1], &[0.1, 0.4, 0.35, 0.8]).unwrap(), 0.75);
        assert_eq!(auc(&[1, 1], &[0.1, 0.2]).unwrap_err(), MetricsError::SingleClass);
    }

    #[test]
    fn roc_shape() {
        let pts = roc_curve(&[0, 0, 1, 1], &[0.1, 0.2, 0.8, 0.9]).unwrap();
        assert!(pts.contains(&(0.0, 1.0)));
        assert_eq!(pts[0], (0.0, 0.0));
        assert_eq!(*pts.last().unwrap(), (1.0, 1.0));

        let pts = roc_curve(&[0, 1, 0, 1], &[0.3, 0.3, 0.3, 0.3]).unwrap();
        assert_eq!(pts, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_abs_diff_eq!(roc_auc(&pts), 0.5);
    }

    #[test]
    fn roc_area_equals_mann_whitney() {
        let mut rng = crate::rng::substream(42, "roc-test", 0);
        for _ in 0..100 {
            let n = rng.gen_range(5..40);
            let y: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.4))).collect();
            if y.iter().all(|&v| v == 0) || y.iter().all(|&v| v == 1) {
                continue;
            }
            // discretized scores to force ties
            let s: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..8) as f64) / 8.0).collect();
            let a = auc(&y, &s).unwrap();
            let b = roc_auc(&roc_curve(&y, &s).unwrap());
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn auc_complement_and_monotone_invariance() {
        let mut rng = crate::rng::substream(43, "auc-props", 0);
        for _ in 0..50 {
            let n = rng.gen_range(6..30);
            let y: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.5))).collect();
            if y.iter().all(|&v| v == 0) || y.iter().all(|&v| v == 1) {
                continue;
            }
            let s: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            assert_abs_diff_eq!(auc(&y, &s).unwrap() + auc(&y, &neg).unwrap(), 1.0, epsilon = 1e-12);
            let warped: Vec<f64> = s.iter().map(|v| (3.0 * v).exp()).collect();
            assert_abs_diff_eq!(auc(&y, &s).unwrap(), auc(&y, &warped).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn oa_is_prevalence_weighted_mix() {
        let cm = ConfusionMatrix { tp: 7, fp: 3, fn_: 5, tn: 15 };
        let r = gof(&cm, None).unwrap();
        let n = cm.total() as f64;
        let prev = (cm.tp + cm.fn_) as f64 / n;
        let mix = prev * r.sensitivity.unwrap() + (1.0 - prev) * r.specificity.unwrap();
        assert_abs_diff_eq!(r.oa.unwrap(), mix, epsilon = 1e-12);
    }
}
