//! Held-out evaluation with cross-validated epoch choice and the ablation grid.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::FusionDataset;
use super::model::{FusionConfig, FusionModel, Modality, Sample};
use super::train::{train, train_with_snapshots, InputScaling, TrainOptions};
use super::FusionError;
use crate::data::Stage;
use crate::stats::{classify_metrics, roc, stratified_split, RocPoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessOptions {
    pub train: TrainOptions,
    pub folds: usize,
    pub test_fraction: f64,
    /// Epoch counts compared by cross-validation; empty means quarters of `train.epochs`.
    pub candidate_epochs: Vec<usize>,
    pub class_threshold: f64,
    pub seed: u64,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self {
            train: TrainOptions::default(),
            folds: 5,
            test_fraction: 0.2,
            candidate_epochs: Vec::new(),
            class_threshold: 0.5,
            seed: 0,
        }
    }
}

impl HarnessOptions {
    fn candidates(&self) -> Vec<usize> {
        let mut c = if self.candidate_epochs.is_empty() {
            (1..=4).map(|q| (self.train.epochs * q / 4).max(1)).collect()
        } else {
            self.candidate_epochs.clone()
        };
        c.sort_unstable();
        c.dedup();
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub auc: f64,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub modality: Modality,
    pub with_dp: bool,
    /// False when the modality never sees the values vector, so the DP switch is moot.
    pub dp_applicable: bool,
    pub epochs: usize,
    pub cv_auc: f64,
    pub test: TestMetrics,
    pub roc: Vec<RocPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub horizon: Stage,
    pub seed: u64,
    pub n_samples: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub test_ids: Vec<String>,
    pub rows: Vec<AblationRow>,
    /// Published tri-modal AUC for this horizon, as context only.
    pub reference_auc: Option<f64>,
}

/// A trained model with the input scaling fitted on its training rows.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub model: FusionModel,
    pub scaling: InputScaling,
}

impl TrainedModel {
    pub fn predict(&self, samples: &[Sample]) -> Result<Vec<f64>, FusionError> {
        let scaled: Vec<Sample> = samples.iter().map(|s| self.scaling.apply(s)).collect();
        Ok(self.model.forward_batch(&scaled)?.into_iter().map(|p| p[0]).collect())
    }
}

pub struct HarnessOutcome {
    pub report: HarnessReport,
    /// One trained model per distinct row, keyed by row label.
    pub models: Vec<(String, TrainedModel)>,
}

pub fn reference_auc(horizon: Stage) -> Option<f64> {
    match horizon {
        Stage::W2 => Some(0.94),
        Stage::M3 => Some(0.90),
        Stage::M6 => Some(0.91),
        Stage::M12 => Some(0.89),
        Stage::Pre => None,
    }
}

/// Stratified `k` folds: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [true, false] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

fn pick(samples: &[Sample], idx: &[usize]) -> Vec<Sample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

fn fit_scaled(
    config: &FusionConfig,
    train_set: &[Sample],
    opts: &TrainOptions,
    snapshots: &[usize],
) -> Result<(TrainedModel, Vec<(usize, TrainedModel)>), FusionError> {
    let scaling = InputScaling::fit(train_set);
    let scaled: Vec<Sample> = train_set.iter().map(|s| scaling.apply(s)).collect();
    let model = FusionModel::new(config.clone())?;
    let (out, snaps) = if snapshots.is_empty() {
        (train(model, &scaled, opts)?, Vec::new())
    } else {
        train_with_snapshots(model, &scaled, opts, snapshots)?
    };
    let wrap = |model| TrainedModel { model, scaling: scaling.clone() };
    let snaps = snaps.into_iter().map(|(e, m)| (e, wrap(m))).collect();
    Ok((wrap(out.model), snaps))
}

fn auc_of(model: &TrainedModel, samples: &[Sample]) -> Result<f64, FusionError> {
    let labels: Vec<bool> = samples.iter().map(|s| s.superior).collect();
    Ok(roc(&model.predict(samples)?, &labels)?.auc)
}

/// Cross-validates the epoch count on `train_set`, retrains on all of it and scores `test_set`.
pub fn evaluate_config(
    config: &FusionConfig,
    train_set: &[Sample],
    test_set: &[Sample],
    opts: &HarnessOptions,
) -> Result<(TrainedModel, usize, f64, TestMetrics, Vec<RocPoint>), FusionError> {
    let labels: Vec<bool> = train_set.iter().map(|s| s.superior).collect();
    let candidates = opts.candidates();
    let folds = stratified_folds(&labels, opts.folds.max(2), opts.seed);
    let mut cv = vec![0.0; candidates.len()];
    for (f, val_idx) in folds.iter().enumerate() {
        let val = pick(train_set, val_idx);
        if !(val.iter().any(|s| s.superior) && val.iter().any(|s| !s.superior)) {
            return Err(FusionError::InsufficientData(format!("fold {f} lacks one outcome class")));
        }
        let fit_idx: Vec<usize> = (0..train_set.len()).filter(|i| !val_idx.contains(i)).collect();
        let fold_opts = TrainOptions { epochs: *candidates.last().expect("candidates"), ..opts.train.clone() };
        let (_, snaps) = fit_scaled(config, &pick(train_set, &fit_idx), &fold_opts, &candidates)?;
        for (slot, (_, m)) in cv.iter_mut().zip(&snaps) {
            *slot += auc_of(m, &val)? / folds.len() as f64;
        }
    }
    let best = (0..candidates.len()).fold(0, |b, i| if cv[i] > cv[b] { i } else { b });
    let epochs = candidates[best];
    let (model, _) = fit_scaled(config, train_set, &TrainOptions { epochs, ..opts.train.clone() }, &[])?;
    let probs = model.predict(test_set)?;
    let test_labels: Vec<bool> = test_set.iter().map(|s| s.superior).collect();
    let curve = roc(&probs, &test_labels)?;
    let m = classify_metrics(&probs, &test_labels, opts.class_threshold)?;
    let metrics = TestMetrics {
        auc: curve.auc,
        accuracy: m.accuracy,
        sensitivity: m.sensitivity,
        specificity: m.specificity,
        threshold: opts.class_threshold,
    };
    Ok((model, epochs, cv[best], metrics, curve.points))
}

/// Runs the six-row ablation grid (three modality sets, with and without
/// dynamic parameters) on one stratified split of the horizon's samples.
pub fn evaluate_harness(
    ds: &FusionDataset,
    base: &FusionConfig,
    horizon: Stage,
    opts: &HarnessOptions,
) -> Result<HarnessOutcome, FusionError> {
    let (ids, all_dp) = ds.samples(horizon, true)?;
    let (_, all_no_dp) = ds.samples(horizon, false)?;
    let labels: Vec<bool> = all_dp.iter().map(|s| s.superior).collect();
    let positives = labels.iter().filter(|&&y| y).count();
    let min_class = positives.min(labels.len() - positives);
    if min_class < opts.folds.max(2) + 1 {
        return Err(FusionError::InsufficientData(format!(
            "{} samples with {positives} superior at {horizon}; every fold and the test split need both classes",
            labels.len()
        )));
    }
    let (train_idx, test_idx) = stratified_split(&labels, opts.test_fraction, opts.seed);

    let mut rows = Vec::new();
    let mut models: Vec<(String, TrainedModel)> = Vec::new();
    for modality in Modality::ALL {
        for with_dp in [false, true] {
            let dp_applicable = modality != Modality::ImageOnly && ds.has_dp();
            let label = format!("{}{}", modality.tag(), if with_dp { "+dp" } else { "" });
            if !dp_applicable && with_dp {
                // Identical inputs to the row without DP: reuse it.
                let mut row: AblationRow = rows.last().cloned().expect("without-DP row precedes");
                row.label = label;
                row.with_dp = true;
                rows.push(row);
                continue;
            }
            let samples = if with_dp { &all_dp } else { &all_no_dp };
            let config = FusionConfig {
                modality,
                clinical_dim: ds.clinical_names.len(),
                values_dim: samples.first().map_or(0, |s| s.values.len()),
                ..base.clone()
            };
            let (model, epochs, cv_auc, test, roc) =
                evaluate_config(&config, &pick(samples, &train_idx), &pick(samples, &test_idx), opts)?;
            rows.push(AblationRow { label: label.clone(), modality, with_dp, dp_applicable, epochs, cv_auc, test, roc });
            models.push((label, model));
        }
    }
    Ok(HarnessOutcome {
        report: HarnessReport {
            horizon,
            seed: opts.seed,
            n_samples: labels.len(),
            n_train: train_idx.len(),
            n_test: test_idx.len(),
            test_ids: test_idx.iter().map(|&i| ids[i].clone()).collect(),
            rows,
            reference_auc: reference_auc(horizon),
        },
        models,
    })
}
