use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{ols_fit, Matrix};

/// Regressors of the baseline: fixed-effect cell and optional lagged income.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub supranational: String,
    pub year: i32,
    /// log10 GDP at the end of the previous period.
    pub lag: Option<f64>,
}

/// OLS of log10 GDP on supranational-region × year dummies plus lagged
/// log10 GDP. Solved by the minimum-norm pseudo-inverse, so a row from a
/// cell unseen in training receives the intercept plus the lag term.
#[derive(Debug, Clone, Serialize)]
pub struct BaselineModel {
    pub cells: Vec<(String, i32)>,
    pub intercept: f64,
    pub cell_effects: Vec<f64>,
    pub lag_coefficient: Option<f64>,
    /// Cells with a single observation (fitted exactly).
    pub singleton_cells: Vec<(String, i32)>,
    pub rank_deficient: bool,
}

pub fn fit_baseline(rows: &[BaselineRow], y: &[f64]) -> Result<BaselineModel> {
    if rows.is_empty() {
        return Err(Error::validation("baseline: no labeled observations in the period"));
    }
    if rows.len() != y.len() {
        return Err(Error::validation("baseline: rows and response differ in length"));
    }
    let has_lag = rows[0].lag.is_some();
    if rows.iter().any(|r| r.lag.is_some() != has_lag) {
        return Err(Error::validation("baseline: lag present on some rows only"));
    }
    let cells: Vec<(String, i32)> = rows
        .iter()
        .map(|r| (r.supranational.clone(), r.year))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let p = cells.len() + usize::from(has_lag);
    let mut data = vec![0.0; rows.len() * p];
    for (i, r) in rows.iter().enumerate() {
        let c = cells
            .binary_search(&(r.supranational.clone(), r.year))
            .expect("cell collected above");
        data[i * p + c] = 1.0;
        if let Some(l) = r.lag {
            data[i * p + cells.len()] = l;
        }
    }
    let fit = ols_fit(&Matrix::new(rows.len(), p, data)?, y)?;
    let singleton_cells = cells
        .iter()
        .filter(|c| rows.iter().filter(|r| r.supranational == c.0 && r.year == c.1).count() == 1)
        .cloned()
        .collect();
    Ok(BaselineModel {
        cell_effects: fit.coefficients[..cells.len()].to_vec(),
        lag_coefficient: has_lag.then(|| fit.coefficients[cells.len()]),
        intercept: fit.intercept,
        cells,
        singleton_cells,
        rank_deficient: fit.rank_deficient,
    })
}

impl BaselineModel {
    pub fn predict(&self, row: &BaselineRow) -> Result<f64> {
        let mut v = self.intercept;
        if let Ok(c) = self.cells.binary_search(&(row.supranational.clone(), row.year)) {
            v += self.cell_effects[c];
        }
        match (self.lag_coefficient, row.lag) {
            (Some(b), Some(l)) => v += b * l,
            (None, None) => {}
            _ => return Err(Error::validation("baseline: lag regressor mismatch")),
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(s: &str, year: i32, lag: Option<f64>) -> BaselineRow {
        BaselineRow {
            supranational: s.into(),
            year,
            lag,
        }
    }

    #[test]
    fn region_means_without_lag() {
        let rows = vec![row("A", 1300, None), row("A", 1300, None), row("B", 1300, None), row("B", 1300, None)];
        let y = [2.0, 4.0, 1.0, 2.0];
        let m = fit_baseline(&rows, &y).unwrap();
        assert!(m.lag_coefficient.is_none());
        assert!((m.predict(&rows[0]).unwrap() - 3.0).abs() < 1e-10);
        assert!((m.predict(&rows[2]).unwrap() - 1.5).abs() < 1e-10);
    }

    #[test]
    fn exact_persistence() {
        let lags = [2.9, 3.1, 3.4, 2.7, 3.0, 3.3, 2.5, 3.6];
        let rows: Vec<BaselineRow> = lags
            .iter()
            .enumerate()
            .map(|(i, &l)| row(if i % 2 == 0 { "A" } else { "B" }, 1600, Some(l)))
            .collect();
        let m = fit_baseline(&rows, &lags).unwrap();
        assert!((m.lag_coefficient.unwrap() - 1.0).abs() < 1e-8);
        assert!(m.intercept.abs() < 1e-8);
        assert!(m.cell_effects.iter().all(|e| e.abs() < 1e-8));
    }

    #[test]
    fn empty_period_is_an_error() {
        assert!(fit_baseline(&[], &[]).is_err());
    }
}
