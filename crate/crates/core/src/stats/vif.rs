use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{DataMatrix, StatsError};

pub const VIF_LIMIT: f64 = 5.0;

/// Below this, `1 - R^2` is treated as exact collinearity.
const COLLINEAR_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VifReport {
    /// VIF of every column before any removal. Infinite VIFs serialize as null.
    pub initial: Vec<(String, f64)>,
    /// Columns removed, in removal order, with the VIF that triggered removal.
    pub removed: Vec<(String, f64)>,
    pub kept: Vec<String>,
    /// VIFs of the kept columns after the last removal.
    pub final_vifs: Vec<(String, f64)>,
}

/// `R^2` of regressing `y` on `others` with an intercept.
fn r_squared(y: &DVector<f64>, others: &DMatrix<f64>) -> f64 {
    let n = y.len();
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        // A constant column is collinear with the intercept.
        return 1.0;
    }
    let mut z = DMatrix::from_element(n, others.ncols() + 1, 1.0);
    z.columns_mut(1, others.ncols()).copy_from(others);
    let svd = z.clone().svd(true, true);
    let beta = svd.solve(y, 1e-12).expect("U and V were computed");
    let resid = y - z * beta;
    1.0 - resid.norm_squared() / ss_tot
}

fn vif_of(x: &DMatrix<f64>) -> Vec<f64> {
    (0..x.ncols())
        .map(|j| {
            if x.ncols() == 1 {
                return 1.0;
            }
            let y = x.column(j).into_owned();
            let others = x.clone().remove_column(j);
            let tolerance = 1.0 - r_squared(&y, &others);
            if tolerance < COLLINEAR_TOL {
                f64::INFINITY
            } else {
                1.0 / tolerance
            }
        })
        .collect()
}

/// Variance inflation factor of every column of a fully observed matrix.
pub fn vif(m: &DataMatrix) -> Result<Vec<(String, f64)>, StatsError> {
    let (x, _) = design_only(m)?;
    Ok(m.columns.iter().cloned().zip(vif_of(&x)).collect())
}

fn design_only(m: &DataMatrix) -> Result<(DMatrix<f64>, usize), StatsError> {
    if m.n_cols() < 2 {
        return Err(StatsError::InsufficientData("VIF needs at least two columns".into()));
    }
    if m.n_rows() <= m.n_cols() {
        return Err(StatsError::TooFewObservations { n: m.n_rows(), p: m.n_cols() });
    }
    let mut x = DMatrix::zeros(m.n_rows(), m.n_cols());
    for (i, row) in m.cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            x[(i, j)] = cell.ok_or_else(|| StatsError::MissingValues(m.columns[j].clone()))?;
        }
    }
    Ok((x, m.n_cols()))
}

/// Greedy elimination: drop the column with the largest VIF while it exceeds
/// `limit`, recomputing after every removal. Ties go to the earlier column.
pub fn vif_screen(m: &DataMatrix, limit: f64) -> Result<VifReport, StatsError> {
    let (mut x, _) = design_only(m)?;
    let mut names = m.columns.clone();
    let mut vifs = vif_of(&x);
    let initial = names.iter().cloned().zip(vifs.iter().copied()).collect();
    let mut removed = Vec::new();
    loop {
        let worst = vifs
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (j, &v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((j, v)),
            });
        match worst {
            Some((j, v)) if v > limit => {
                removed.push((names.remove(j), v));
                x = x.remove_column(j);
                vifs = vif_of(&x);
            }
            _ => break,
        }
    }
    Ok(VifReport {
        initial,
        removed,
        final_vifs: names.iter().cloned().zip(vifs).collect(),
        kept: names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(cols: &[(&str, Vec<f64>)]) -> DataMatrix {
        let n = cols[0].1.len();
        DataMatrix::from_columns(cols, &vec![true; n]).unwrap()
    }

    #[test]
    fn orthogonal_columns_have_unit_vif() {
        // Centered, mutually orthogonal contrasts.
        let a = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let b = vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let c = vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
        for (_, v) in vif(&mat(&[("a", a), ("b", b), ("c", c)])).unwrap() {
            assert!((v - 1.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn duplicate_column_is_infinite_and_removed_once() {
        let a: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let b: Vec<f64> = (0..10).map(|i| ((i * 7) % 5) as f64).collect();
        let m = mat(&[("a", a.clone()), ("b", b), ("a2", a)]);
        let rep = vif_screen(&m, VIF_LIMIT).unwrap();
        assert!(rep.initial[0].1.is_infinite() && rep.initial[2].1.is_infinite());
        assert_eq!(rep.removed.len(), 1);
        assert_eq!(rep.removed[0].0, "a");
        assert_eq!(rep.kept, vec!["b", "a2"]);
    }

    #[test]
    fn needs_more_rows_than_columns() {
        let m = mat(&[("a", vec![1.0, 2.0]), ("b", vec![2.0, 1.0])]);
        assert!(matches!(vif(&m), Err(StatsError::TooFewObservations { .. })));
    }
}
