use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{shapiro_wilk, StatsError};

/// Normality gate for the automatic Pearson/Spearman choice.
const NORMALITY_ALPHA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationMode {
    Auto,
    Pearson,
    Spearman,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub method: CorrelationMethod,
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

/// 1-based ranks, ties sharing the average of the positions they span.
pub fn rank_average(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(StatsError::DegenerateSample("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p of `r` under the t approximation with `n - 2` degrees of freedom.
fn t_test_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = r * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

pub fn correlate(x: &[f64], y: &[f64], mode: CorrelationMode) -> Result<Correlation, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::ShapeMismatch(format!("{} vs {} observations", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::SampleSize { n, min: 3, max: usize::MAX });
    }
    let method = match mode {
        CorrelationMode::Pearson => CorrelationMethod::Pearson,
        CorrelationMode::Spearman => CorrelationMethod::Spearman,
        CorrelationMode::Auto => {
            let normal = |v: &[f64]| shapiro_wilk(v).map(|sw| sw.p > NORMALITY_ALPHA).unwrap_or(false);
            if normal(x) && normal(y) {
                CorrelationMethod::Pearson
            } else {
                CorrelationMethod::Spearman
            }
        }
    };
    let r = match method {
        CorrelationMethod::Pearson => pearson_r(x, y)?,
        CorrelationMethod::Spearman => pearson_r(&rank_average(x), &rank_average(y))?,
    };
    Ok(Correlation { method, r, p: t_test_p(r, n), n })
}
