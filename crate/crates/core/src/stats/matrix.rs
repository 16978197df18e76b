use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::StatsError;

/// Observations (one per eye) by named covariates, with a binary outcome per row.
///
/// `outcome[i] == Some(true)` means the eye reached the Superior class. An
/// optional continuous `response` (e.g. letter change) feeds correlation reports.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    pub row_ids: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
    pub outcome: Vec<Option<bool>>,
    pub response: Option<Vec<Option<f64>>>,
}

impl DataMatrix {
    pub fn new(
        columns: Vec<String>,
        cells: Vec<Vec<Option<f64>>>,
        outcome: Vec<Option<bool>>,
    ) -> Result<Self, StatsError> {
        let row_ids = (0..cells.len()).map(|i| i.to_string()).collect();
        let m = Self { row_ids, columns, cells, outcome, response: None };
        m.validate()?;
        Ok(m)
    }

    /// Fully observed matrix from column vectors.
    pub fn from_columns(columns: &[(&str, Vec<f64>)], outcome: &[bool]) -> Result<Self, StatsError> {
        let n = outcome.len();
        if let Some((name, _)) = columns.iter().find(|(_, v)| v.len() != n) {
            return Err(StatsError::ShapeMismatch(format!("column {name} length differs from outcome")));
        }
        let cells = (0..n).map(|i| columns.iter().map(|(_, v)| Some(v[i])).collect()).collect();
        Self::new(
            columns.iter().map(|(n, _)| n.to_string()).collect(),
            cells,
            outcome.iter().map(|&y| Some(y)).collect(),
        )
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        let n = self.cells.len();
        if self.outcome.len() != n || self.row_ids.len() != n {
            return Err(StatsError::ShapeMismatch("row count differs between cells, ids and outcome".into()));
        }
        if let Some(r) = &self.response {
            if r.len() != n {
                return Err(StatsError::ShapeMismatch("response length differs".into()));
            }
        }
        if let Some(i) = self.cells.iter().position(|row| row.len() != self.columns.len()) {
            return Err(StatsError::ShapeMismatch(format!("row {i} is not rectangular")));
        }
        let mut names = self.columns.clone();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(StatsError::ShapeMismatch("column names must be unique".into()));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize, StatsError> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| StatsError::UnknownColumn(name.into()))
    }

    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        self.cells.iter().map(|row| row[j]).collect()
    }

    /// Fully observed column values.
    pub fn complete_column(&self, name: &str) -> Result<Vec<f64>, StatsError> {
        let j = self.column_index(name)?;
        self.cells
            .iter()
            .map(|row| row[j].ok_or_else(|| StatsError::MissingValues(name.into())))
            .collect()
    }

    pub fn labels(&self) -> Result<Vec<bool>, StatsError> {
        self.outcome
            .iter()
            .map(|y| y.ok_or_else(|| StatsError::MissingValues("outcome".into())))
            .collect()
    }

    /// Keeps only the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Self, StatsError> {
        let idx = names.iter().map(|n| self.column_index(n)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            columns: names.to_vec(),
            cells: self.cells.iter().map(|row| idx.iter().map(|&j| row[j]).collect()).collect(),
            ..self.clone()
        })
    }

    /// Keeps only the given rows, in the given order.
    pub fn rows(&self, idx: &[usize]) -> Self {
        Self {
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
            columns: self.columns.clone(),
            cells: idx.iter().map(|&i| self.cells[i].clone()).collect(),
            outcome: idx.iter().map(|&i| self.outcome[i]).collect(),
            response: self.response.as_ref().map(|r| idx.iter().map(|&i| r[i]).collect()),
        }
    }

    /// Covariate block (no intercept) of the named columns plus the labels.
    pub fn design(&self, names: &[String]) -> Result<(DMatrix<f64>, Vec<bool>), StatsError> {
        let idx = names.iter().map(|n| self.column_index(n)).collect::<Result<Vec<_>, _>>()?;
        let mut x = DMatrix::zeros(self.n_rows(), idx.len());
        for (i, row) in self.cells.iter().enumerate() {
            for (k, &j) in idx.iter().enumerate() {
                x[(i, k)] = row[j].ok_or_else(|| StatsError::MissingValues(self.columns[j].clone()))?;
            }
        }
        Ok((x, self.labels()?))
    }
}
