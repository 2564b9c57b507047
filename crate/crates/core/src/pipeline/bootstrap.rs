use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::BootstrapUnit;
use crate::elasticnet::{en_predict, PreparedDesign};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::ingest::LocationTable;
use crate::numerics::quantile;
use crate::seed::child_rng;

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapOutcome {
    /// Level-scale `(low, high)` per target row.
    pub intervals: Vec<(f64, f64)>,
    /// Degenerate resamples that were drawn again.
    pub redrawn: usize,
}

#[derive(Debug, Clone)]
pub struct BootstrapSpec<'a> {
    pub replicates: usize,
    pub level: f64,
    pub unit: BootstrapUnit,
    pub locations: &'a LocationTable,
    pub seed: u64,
}

/// Clusters of training rows that are resampled together.
fn clusters(training: &FeatureMatrix, unit: BootstrapUnit, locations: &LocationTable) -> Vec<Vec<usize>> {
    match unit {
        BootstrapUnit::Row => (0..training.n_rows()).map(|i| vec![i]).collect(),
        BootstrapUnit::Country => {
            let mut by_country: std::collections::BTreeMap<&str, Vec<usize>> = Default::default();
            for (i, k) in training.keys.iter().enumerate() {
                let c = locations.country_of(&k.location_id).unwrap_or(&k.location_id);
                by_country.entry(c).or_default().push(i);
            }
            by_country.into_values().collect()
        }
    }
}

/// Percentile bootstrap: refit at fixed `(alpha, lambda)` on `replicates`
/// resamples of the training rows and take level-scale quantiles of the
/// predictions for each target.
pub fn bootstrap_ci(
    training: &FeatureMatrix,
    y: &[f64],
    alpha: f64,
    lambda: f64,
    targets: &FeatureMatrix,
    spec: &BootstrapSpec,
) -> Result<BootstrapOutcome> {
    if spec.replicates < 50 {
        return Err(Error::validation("bootstrap needs at least 50 replicates"));
    }
    if !(spec.level > 0.0 && spec.level < 1.0) {
        return Err(Error::validation("bootstrap level must lie in (0, 1)"));
    }
    if training.n_rows() == 0 || training.n_rows() != y.len() {
        return Err(Error::validation("bootstrap: empty or mismatched training data"));
    }
    let groups = clusters(training, spec.unit, spec.locations);
    let all_identical = (1..training.n_rows()).all(|i| training.row(i) == training.row(0) && y[i] == y[0]);

    let draws: Vec<(Vec<f64>, usize)> = (0..spec.replicates)
        .into_par_iter()
        .map(|b| -> Result<(Vec<f64>, usize)> {
            let mut rng = child_rng(spec.seed, "bootstrap", b as u64);
            let mut redrawn = 0;
            let rows = loop {
                let mut rows = Vec::with_capacity(training.n_rows());
                for _ in 0..groups.len() {
                    rows.extend_from_slice(&groups[rng.random_range(0..groups.len())]);
                }
                // a resample of one repeated row carries no information,
                // unless the data themselves are all identical
                if all_identical || rows.iter().any(|&r| r != rows[0]) {
                    break rows;
                }
                redrawn += 1;
                if redrawn > 1000 {
                    return Err(Error::numerical("bootstrap: could not draw a non-degenerate resample"));
                }
            };
            let sample = training.select_rows(&rows);
            let ys: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
            let prepared = PreparedDesign::new(&sample.values, &sample.names, &ys)?;
            let model = prepared.fit(alpha, lambda)?;
            let pred = en_predict(&model, &targets.values, &targets.names)?;
            Ok((pred.into_iter().map(|p| 10f64.powf(p)).collect(), redrawn))
        })
        .collect::<Result<_>>()?;

    let lo_p = (1.0 - spec.level) / 2.0;
    let hi_p = 1.0 - lo_p;
    let intervals = (0..targets.n_rows())
        .map(|t| {
            let vals: Vec<f64> = draws.iter().map(|d| d.0[t]).collect();
            Ok((quantile(&vals, lo_p)?, quantile(&vals, hi_p)?))
        })
        .collect::<Result<_>>()?;
    Ok(BootstrapOutcome {
        intervals,
        redrawn: draws.iter().map(|d| d.1).sum(),
    })
}
