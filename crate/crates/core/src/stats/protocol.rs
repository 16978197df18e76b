//! The full logistic pipeline: clean, describe, screen, fit, compare.

use serde::{Deserialize, Serialize};

use super::{
    clean, compare_with_without_dp, correlate, shapiro_wilk, univariate_screen, vif_screen, CleaningReport,
    ComparisonReport, Correlation, CorrelationMode, DataMatrix, ScreenReport, ShapiroWilk, StatsError, VifReport,
    DEFAULT_MISSING_THRESHOLD, VIF_LIMIT,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub missing_threshold: f64,
    pub screen_alpha: f64,
    pub vif_limit: f64,
    pub test_fraction: f64,
    pub class_threshold: f64,
    pub seed: u64,
    /// Exclude dynamic-parameter columns from every step.
    pub without_dp: bool,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            missing_threshold: DEFAULT_MISSING_THRESHOLD,
            screen_alpha: 0.10,
            vif_limit: VIF_LIMIT,
            test_fraction: 0.2,
            class_threshold: 0.5,
            seed: 0,
            without_dp: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub n_rows: usize,
    pub n_superior: usize,
    pub cleaning: CleaningReport,
    pub constant_columns: Vec<String>,
    pub normality: Vec<(String, Option<ShapiroWilk>)>,
    pub correlations: Vec<(String, Option<Correlation>)>,
    pub vif: Option<VifReport>,
    pub screen: ScreenReport,
    pub selected: Vec<String>,
    pub dp_selected: Vec<String>,
    pub comparison: ComparisonReport,
}

pub fn run_protocol(
    m: &DataMatrix,
    dp_columns: &[String],
    opts: &ProtocolOptions,
) -> Result<ProtocolReport, StatsError> {
    let labels: Vec<bool> = m.outcome.iter().flatten().copied().collect();
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(StatsError::OneClassOnly);
    }
    let (cleaned, cleaning) = clean(m, opts.missing_threshold)?;

    let mut candidates = Vec::new();
    let mut constant_columns = Vec::new();
    for name in &cleaned.columns {
        if opts.without_dp && dp_columns.contains(name) {
            continue;
        }
        let v = cleaned.complete_column(name)?;
        if v.iter().all(|&x| x == v[0]) {
            constant_columns.push(name.clone());
        } else {
            candidates.push(name.clone());
        }
    }
    let work = cleaned.select(&candidates)?;

    let normality = candidates
        .iter()
        .map(|c| (c.clone(), work.complete_column(c).ok().and_then(|v| shapiro_wilk(&v).ok())))
        .collect();
    let correlations = match &work.response {
        None => Vec::new(),
        Some(resp) => candidates
            .iter()
            .map(|c| {
                let pairs: Vec<(f64, f64)> = work
                    .column(work.column_index(c).expect("selected column"))
                    .iter()
                    .zip(resp)
                    .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                    .collect();
                let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
                (c.clone(), correlate(&x, &y, CorrelationMode::Auto).ok())
            })
            .collect(),
    };

    let (vif, after_vif) = if work.n_cols() >= 2 {
        let rep = vif_screen(&work, opts.vif_limit)?;
        let kept = rep.kept.clone();
        (Some(rep), kept)
    } else {
        (None, candidates.clone())
    };
    let screen = univariate_screen(&work.select(&after_vif)?, opts.screen_alpha)?;
    let selected = screen.selected.clone();
    let dp_selected: Vec<String> = selected.iter().filter(|c| dp_columns.contains(c)).cloned().collect();
    let comparison = compare_with_without_dp(
        &work.select(&selected)?,
        &dp_selected,
        opts.test_fraction,
        opts.class_threshold,
        opts.seed,
    )?;
    Ok(ProtocolReport {
        n_rows: work.n_rows(),
        n_superior: work.outcome.iter().filter(|y| **y == Some(true)).count(),
        cleaning,
        constant_columns,
        normality,
        correlations,
        vif,
        screen,
        selected,
        dp_selected,
        comparison,
    })
}
