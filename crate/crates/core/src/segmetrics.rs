//! Per-class segmentation quality: Dice, IoU, pixel accuracy, F1 and ROC AUC.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClassLabel, LabeledScan};
use crate::stats::{self, StatsError};

#[derive(Debug, Error)]
pub enum SegError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no scan pairs")]
    EmptyInput,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Pixel confusion counts for one class. Merging is associative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_masks(pred: &[bool], truth: &[bool]) -> Result<Self, SegError> {
        if pred.len() != truth.len() {
            return Err(SegError::ShapeMismatch(format!("{} vs {} pixels", pred.len(), truth.len())));
        }
        let mut c = Confusion::default();
        for (&p, &t) in pred.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn merge(self, o: Confusion) -> Confusion {
        Confusion { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn metrics(&self) -> BinaryMetrics {
        let (tp, fp, fn_) = (self.tp as f64, self.fp as f64, self.fn_ as f64);
        let overlap_denom = 2.0 * tp + fp + fn_;
        // Both masks empty counts as perfect agreement.
        let dice = if overlap_denom == 0.0 { 1.0 } else { 2.0 * tp / overlap_denom };
        let union = tp + fp + fn_;
        let iou = if union == 0.0 { 1.0 } else { tp / union };
        // F1 in its count form 2TP / (2TP + FP + FN), which is the Dice formula.
        let f1 = dice;
        let accuracy = if self.total() == 0 { 1.0 } else { (self.tp + self.tn) as f64 / self.total() as f64 };
        BinaryMetrics { dice, iou, accuracy, f1 }
    }

    /// `(sensitivity + specificity) / 2`, the AUC of a single hard operating point.
    pub fn balanced_accuracy(&self) -> Option<f64> {
        let pos = self.tp + self.fn_;
        let neg = self.tn + self.fp;
        (pos > 0 && neg > 0).then(|| (self.tp as f64 / pos as f64 + self.tn as f64 / neg as f64) / 2.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub dice: f64,
    pub iou: f64,
    pub accuracy: f64,
    pub f1: f64,
}

pub fn binary_metrics(pred: &[bool], truth: &[bool]) -> Result<BinaryMetrics, SegError> {
    Ok(Confusion::from_masks(pred, truth)?.metrics())
}

/// Pixel-level AUC of a probability map against a binary mask.
pub fn roc_auc_class(prob: &[f64], truth: &[bool]) -> Result<f64, SegError> {
    if prob.len() != truth.len() {
        return Err(SegError::ShapeMismatch(format!("{} vs {} pixels", prob.len(), truth.len())));
    }
    Ok(stats::roc(prob, truth)?.auc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: ClassLabel,
    pub dice: f64,
    pub iou: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub roc_auc: Option<f64>,
    /// AUC came from a hard mask (balanced accuracy) rather than probabilities.
    pub hard_mask_fallback: bool,
    pub support: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub dice: f64,
    pub iou: f64,
    pub accuracy: f64,
    pub f1: f64,
    /// Mean over classes with a defined AUC.
    pub roc_auc: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregation {
    /// Pool pixels of all scan pairs before computing metrics.
    Micro,
    /// Average per-pair metrics.
    Macro,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub mean: MeanRow,
    pub aggregation: Aggregation,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

/// Unweighted arithmetic mean of every metric over the class rows.
pub fn mean_row(rows: &[ClassMetrics]) -> MeanRow {
    let aucs: Vec<f64> = rows.iter().filter_map(|r| r.roc_auc).collect();
    MeanRow {
        dice: mean(rows.iter().map(|r| r.dice)),
        iou: mean(rows.iter().map(|r| r.iou)),
        accuracy: mean(rows.iter().map(|r| r.accuracy)),
        f1: mean(rows.iter().map(|r| r.f1)),
        roc_auc: (!aucs.is_empty()).then(|| mean(aucs.into_iter())),
    }
}

fn class_row(class: ClassLabel, c: Confusion) -> ClassMetrics {
    let m = c.metrics();
    ClassMetrics {
        class,
        dice: m.dice,
        iou: m.iou,
        accuracy: m.accuracy,
        f1: m.f1,
        roc_auc: c.balanced_accuracy(),
        hard_mask_fallback: true,
        support: c.tp + c.fn_,
    }
}

/// Table of per-class metrics over paired predicted / ground-truth scans.
pub fn report(
    pred: &[LabeledScan],
    truth: &[LabeledScan],
    classes: &[ClassLabel],
    aggregation: Aggregation,
) -> Result<MetricsReport, SegError> {
    if pred.is_empty() || classes.is_empty() {
        return Err(SegError::EmptyInput);
    }
    if pred.len() != truth.len() {
        return Err(SegError::ShapeMismatch(format!("{} predictions vs {} ground truths", pred.len(), truth.len())));
    }
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        if (p.width(), p.height()) != (t.width(), t.height()) {
            return Err(SegError::ShapeMismatch(format!(
                "pair {i}: {}x{} vs {}x{}",
                p.width(),
                p.height(),
                t.width(),
                t.height()
            )));
        }
    }
    let per_pair = |class: ClassLabel| -> Vec<Confusion> {
        pred.iter()
            .zip(truth)
            .map(|(p, t)| Confusion::from_masks(&p.mask(class), &t.mask(class)).expect("shapes checked"))
            .collect()
    };
    let per_class: Vec<ClassMetrics> = classes
        .iter()
        .map(|&class| {
            let pairs = per_pair(class);
            let pooled = pairs.iter().fold(Confusion::default(), |a, &b| a.merge(b));
            match aggregation {
                Aggregation::Micro => class_row(class, pooled),
                Aggregation::Macro => {
                    let rows: Vec<ClassMetrics> = pairs.iter().map(|&c| class_row(class, c)).collect();
                    let m = mean_row(&rows);
                    ClassMetrics {
                        class,
                        dice: m.dice,
                        iou: m.iou,
                        accuracy: m.accuracy,
                        f1: m.f1,
                        roc_auc: m.roc_auc,
                        hard_mask_fallback: true,
                        support: pooled.tp + pooled.fn_,
                    }
                }
            }
        })
        .collect();
    Ok(MetricsReport { mean: mean_row(&per_class), per_class, aggregation })
}
