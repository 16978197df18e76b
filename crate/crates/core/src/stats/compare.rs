use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    classify_metrics, fit_logistic, likelihood_ratio_test, roc, ClassificationMetrics, DataMatrix, LogisticFit,
    RocCurve, StatsError,
};

/// Stratified train/test split. The test size is `round(n * test_fraction)`,
/// shared across classes by largest remainder; each class is shuffled with the seed.
pub fn stratified_split(labels: &[bool], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = labels.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut classes: Vec<Vec<usize>> = [true, false]
        .iter()
        .map(|&c| (0..n).filter(|&i| labels[i] == c).collect())
        .collect();
    let quotas: Vec<f64> = classes.iter().map(|c| c.len() as f64 * n_test as f64 / n.max(1) as f64).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut short = n_test - take.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = vec![0, 1];
    by_remainder.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())));
    for k in by_remainder {
        if short > 0 && take[k] < classes[k].len() {
            take[k] += 1;
            short -= 1;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (members, k) in classes.iter_mut().zip(take) {
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub columns: Vec<String>,
    pub fit: LogisticFit,
    pub test_metrics: ClassificationMetrics,
    pub test_roc: RocCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub without_dp: ModelSummary,
    pub with_dp: ModelSummary,
    pub lr_statistic: f64,
    pub lr_df: usize,
    pub lr_p: f64,
    pub n_train: usize,
    pub n_test: usize,
}

fn summarize(
    m: &DataMatrix,
    columns: &[String],
    train: &[usize],
    test: &[usize],
    threshold: f64,
) -> Result<ModelSummary, StatsError> {
    let (x_train, y_train) = m.rows(train).design(columns)?;
    // A separated fit is kept with `converged = false` so the comparison still reports it.
    let fit = match fit_logistic(&x_train, columns, &y_train) {
        Err(StatsError::NonConverged(partial)) => *partial,
        other => other?,
    };
    let (x_test, y_test) = m.rows(test).design(columns)?;
    let probs = fit.predict(&x_test);
    Ok(ModelSummary {
        columns: columns.to_vec(),
        test_metrics: classify_metrics(&probs, &y_test, threshold)?,
        test_roc: roc(&probs, &y_test)?,
        fit,
    })
}

/// Fits the nested models with and without the dynamic-parameter columns on the
/// same training rows, scores both on the same held-out rows, and runs a
/// likelihood-ratio test between them on the training fit.
pub fn compare_with_without_dp(
    m: &DataMatrix,
    dp_columns: &[String],
    test_fraction: f64,
    threshold: f64,
    seed: u64,
) -> Result<ComparisonReport, StatsError> {
    for c in dp_columns {
        m.column_index(c)?;
    }
    let labels = m.labels()?;
    let (train, test) = stratified_split(&labels, test_fraction, seed);
    let base: Vec<String> = m.columns.iter().filter(|c| !dp_columns.contains(c)).cloned().collect();
    let without_dp = summarize(m, &base, &train, &test, threshold)?;
    let with_dp = if dp_columns.is_empty() {
        without_dp.clone()
    } else {
        summarize(m, &m.columns, &train, &test, threshold)?
    };
    let (lr_statistic, lr_p) = likelihood_ratio_test(with_dp.fit.loglik, without_dp.fit.loglik, dp_columns.len());
    Ok(ComparisonReport {
        without_dp,
        with_dp,
        lr_statistic,
        lr_df: dp_columns.len(),
        lr_p,
        n_train: train.len(),
        n_test: test.len(),
    })
}
