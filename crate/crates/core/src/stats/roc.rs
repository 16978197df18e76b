use serde::{Deserialize, Serialize};

use super::{rank_average, StatsError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive. The first point uses `+inf`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), StatsError> {
    if scores.len() != labels.len() {
        return Err(StatsError::ShapeMismatch(format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(StatsError::OneClassOnly);
    }
    Ok((pos, neg))
}

/// Threshold sweep over distinct scores plus the Mann-Whitney AUC (ties count 1/2).
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, StatsError> {
    let (pos, neg) = class_counts(scores, labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(StatsError::DegenerateSample("NaN score".into()));
    }

    let ranks = rank_average(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let (p, q) = (pos as f64, neg as f64);
    let u = rank_sum - p * (p + 1.0) / 2.0;
    let auc = u / (p * q);

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { threshold, fpr: fp as f64 / q, tpr: tp as f64 / p });
    }
    Ok(RocCurve { points, auc })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub threshold: f64,
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

/// Confusion-matrix metrics with "positive iff score >= threshold".
pub fn classify_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Result<ClassificationMetrics, StatsError> {
    let (pos, neg) = class_counts(scores, labels)?;
    let (mut tp, mut tn) = (0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            _ => {}
        }
    }
    Ok(ClassificationMetrics {
        accuracy: (tp + tn) as f64 / (pos + neg) as f64,
        sensitivity: tp as f64 / pos as f64,
        specificity: tn as f64 / neg as f64,
        threshold,
        tp,
        fn_: pos - tp,
        tn,
        fp: neg - tn,
    })
}

/// Threshold maximising sensitivity + specificity; the highest such score on ties.
pub fn youden_threshold(scores: &[f64], labels: &[bool]) -> Result<f64, StatsError> {
    let curve = roc(scores, labels)?;
    let best = curve
        .points
        .iter()
        .skip(1)
        .fold(None, |best: Option<(f64, f64)>, pt| {
            let j = pt.tpr - pt.fpr;
            match best {
                Some((_, bj)) if bj >= j => best,
                _ => Some((pt.threshold, j)),
            }
        })
        .expect("at least one finite threshold");
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_tied() {
        let labels = [false, false, true, true];
        assert_eq!(roc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap().auc, 1.0);
        assert_eq!(roc(&[0.5; 4], &labels).unwrap().auc, 0.5);
    }

    #[test]
    fn curve_endpoints() {
        let c = roc(&[0.3, 0.7, 0.7, 0.1, 0.9], &[false, true, false, false, true]).unwrap();
        let first = c.points.first().unwrap();
        let last = c.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert!(c.points.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
    }

    #[test]
    fn one_class() {
        assert!(matches!(roc(&[0.1, 0.2], &[true, true]), Err(StatsError::OneClassOnly)));
        assert!(matches!(classify_metrics(&[0.1], &[false], 0.5), Err(StatsError::OneClassOnly)));
    }

    #[test]
    fn confusion_arithmetic() {
        // TP=3, FN=1, TN=4, FP=2
        let labels = [true, true, true, true, false, false, false, false, false, false];
        let scores = [0.9, 0.8, 0.7, 0.2, 0.1, 0.1, 0.3, 0.4, 0.6, 0.7];
        let m = classify_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!((m.tp, m.fn_, m.tn, m.fp), (3, 1, 4, 2));
        assert!((m.accuracy - 0.7).abs() < 1e-15);
        assert!((m.sensitivity - 0.75).abs() < 1e-15);
        assert!((m.specificity - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn exact_scores_and_all_negative() {
        let labels = [true, false, true, false];
        let scores: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
        let m = classify_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!((m.accuracy, m.sensitivity, m.specificity), (1.0, 1.0, 1.0));
        let m = classify_metrics(&[0.1; 4], &labels, 0.5).unwrap();
        assert_eq!((m.sensitivity, m.specificity), (0.0, 1.0));
    }

    #[test]
    fn youden_picks_separating_threshold() {
        let t = youden_threshold(&[0.1, 0.2, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(t, 0.35);
    }
}
