use serde::{Deserialize, Serialize};

use super::{DataMatrix, StatsError};

pub const DEFAULT_MISSING_THRESHOLD: f64 = 0.10;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    /// (column, fraction missing, imputed mean)
    pub imputed: Vec<(String, f64, f64)>,
    /// (column, fraction missing)
    pub dropped_columns: Vec<(String, f64)>,
    pub dropped_rows: usize,
}

impl CleaningReport {
    pub fn is_empty(&self) -> bool {
        self.imputed.is_empty() && self.dropped_columns.is_empty() && self.dropped_rows == 0
    }
}

/// Drops rows without an outcome, then per column: mean-imputes when the missing
/// fraction is below `missing_threshold`, drops the column otherwise.
pub fn clean(m: &DataMatrix, missing_threshold: f64) -> Result<(DataMatrix, CleaningReport), StatsError> {
    m.validate()?;
    if m.n_rows() == 0 {
        return Err(StatsError::EmptyInput);
    }
    let keep: Vec<usize> = (0..m.n_rows()).filter(|&i| m.outcome[i].is_some()).collect();
    let mut report = CleaningReport { dropped_rows: m.n_rows() - keep.len(), ..Default::default() };
    let rows = m.rows(&keep);
    if rows.n_rows() == 0 {
        return Err(StatsError::EmptyInput);
    }

    let n = rows.n_rows() as f64;
    let mut kept_names = Vec::new();
    let mut fills = Vec::new();
    for (j, name) in rows.columns.iter().enumerate() {
        let col = rows.column(j);
        let observed: Vec<f64> = col.iter().flatten().copied().collect();
        let missing = col.len() - observed.len();
        let fraction = missing as f64 / n;
        if fraction >= missing_threshold || observed.is_empty() {
            report.dropped_columns.push((name.clone(), fraction));
            continue;
        }
        if missing > 0 {
            let mean = observed.iter().sum::<f64>() / observed.len() as f64;
            report.imputed.push((name.clone(), fraction, mean));
            fills.push(Some(mean));
        } else {
            fills.push(None);
        }
        kept_names.push(name.clone());
    }
    if kept_names.is_empty() && rows.n_cols() > 0 {
        return Err(StatsError::AllColumnsDropped);
    }
    let mut out = rows.select(&kept_names)?;
    for row in &mut out.cells {
        for (cell, fill) in row.iter_mut().zip(&fills) {
            if cell.is_none() {
                *cell = *fill;
            }
        }
    }
    Ok((out, report))
}
