use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{FusionModel, Sample};
use super::tensor::Mat;
use super::FusionError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub momentum: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { epochs: 100, lr: 1e-2, batch_size: 8, momentum: 0.9, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: FusionModel,
    /// Mean minibatch loss of each epoch.
    pub losses: Vec<f64>,
}

/// Mini-batch SGD with momentum. Returns the final model and the loss trace.
pub fn train(model: FusionModel, data: &[Sample], opts: &TrainOptions) -> Result<TrainOutcome, FusionError> {
    let (out, _) = train_with_snapshots(model, data, opts, &[])?;
    Ok(out)
}

/// As [`train`], also returning copies of the model after each listed epoch (1-based).
pub fn train_with_snapshots(
    mut model: FusionModel,
    data: &[Sample],
    opts: &TrainOptions,
    snapshot_epochs: &[usize],
) -> Result<(TrainOutcome, Vec<(usize, FusionModel)>), FusionError> {
    if data.is_empty() {
        return Err(FusionError::EmptyBatch);
    }
    if !(data.iter().any(|s| s.superior) && data.iter().any(|s| !s.superior)) {
        return Err(FusionError::InsufficientData("training data has a single class".into()));
    }
    let batch_size = opts.batch_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut velocity: Vec<Mat> = model.params().iter().map(|p| Mat::zeros(p.rows, p.cols)).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(opts.epochs);
    let mut snapshots = Vec::new();
    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (loss, grads) = model.loss_and_grads(&batch)?;
            if !loss.is_finite() {
                return Err(FusionError::Diverged { epoch });
            }
            epoch_loss += loss;
            batches += 1;
            for ((p, v), g) in model.params_mut().iter_mut().zip(&mut velocity).zip(&grads) {
                for ((pi, vi), gi) in p.data.iter_mut().zip(&mut v.data).zip(&g.data) {
                    *vi = opts.momentum * *vi + gi;
                    *pi -= opts.lr * *vi;
                }
            }
        }
        let mean = epoch_loss / batches as f64;
        if !mean.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(FusionError::Diverged { epoch });
        }
        losses.push(mean);
        if snapshot_epochs.contains(&epoch) {
            snapshots.push((epoch, model.clone()));
        }
    }
    Ok((TrainOutcome { model, losses }, snapshots))
}

/// Fraction of samples whose larger probability matches the label.
pub fn accuracy(model: &FusionModel, data: &[Sample]) -> Result<f64, FusionError> {
    let probs = model.forward_batch(data)?;
    let correct = probs.iter().zip(data).filter(|(p, s)| (p[0] >= 0.5) == s.superior).count();
    Ok(correct as f64 / data.len().max(1) as f64)
}

/// Per-column z-scoring fitted on training vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Columns with zero spread get a unit scale.
    pub fn fit(rows: &[&[f64]]) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..dim)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s).collect()
    }
}

/// Standardizers for the clinical and values vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub clinical: Standardizer,
    pub values: Standardizer,
}

impl InputScaling {
    pub fn fit(samples: &[Sample]) -> Self {
        let c: Vec<&[f64]> = samples.iter().map(|s| s.clinical.as_slice()).collect();
        let v: Vec<&[f64]> = samples.iter().map(|s| s.values.as_slice()).collect();
        Self { clinical: Standardizer::fit(&c), values: Standardizer::fit(&v) }
    }

    pub fn identity(clinical_dim: usize, values_dim: usize) -> Self {
        Self { clinical: Standardizer::identity(clinical_dim), values: Standardizer::identity(values_dim) }
    }

    pub fn apply(&self, s: &Sample) -> Sample {
        Sample { clinical: self.clinical.apply(&s.clinical), values: self.values.apply(&s.values), ..s.clone() }
    }
}
