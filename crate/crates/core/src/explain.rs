//! Shapley attributions of model predictions.
//!
//! Absent features are filled from a background sample (interventional
//! convention, features treated as independent). For the linear model this
//! makes the attribution of feature `j` simply `β_j · (x_j − E[x_j])` on the
//! standardized scale; the permutation estimator works for any prediction
//! function and serves as a cross-check.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::elasticnet::EnModel;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, RowKey};
use crate::seed::{child_rng, child_seed};

pub const MIN_PERMUTATIONS: usize = 10;
/// Largest feature count for which every ordering is walked.
pub const MAX_ENUMERATED_FEATURES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attribution {
    pub key: RowKey,
    pub features: Vec<String>,
    /// log10 GDP units.
    pub phi: Vec<f64>,
    /// Monte-Carlo standard errors; zero for exact attributions.
    pub se: Vec<f64>,
    /// Mean prediction over the background.
    pub base: f64,
    pub prediction: f64,
}

impl Attribution {
    /// `Σφ + base − prediction`
    pub fn efficiency_gap(&self) -> f64 {
        self.phi.iter().sum::<f64>() + self.base - self.prediction
    }
}

/// Exact attribution of a linear elastic-net prediction.
///
/// `x` is a raw row whose columns are named by `columns`; the background
/// must contain every model column.
pub fn shapley_linear_exact(
    model: &EnModel,
    key: RowKey,
    x: &[f64],
    columns: &[String],
    background: &FeatureMatrix,
) -> Result<Attribution> {
    if background.n_rows() == 0 {
        return Err(Error::validation("shapley: empty background"));
    }
    if x.len() != columns.len() {
        return Err(Error::validation("shapley: row length does not match its columns"));
    }
    let xmap = model.column_map(columns)?;
    let bmap = model
        .column_map(&background.names)
        .map_err(|e| Error::validation(format!("shapley background: {e}")))?;
    let n = background.n_rows() as f64;
    let p = model.feature_names.len();

    let mut phi = vec![0.0; p];
    let mut base = model.intercept;
    for j in 0..p {
        let beta = model.coefficients[j];
        if beta == 0.0 {
            continue;
        }
        let mean_std = (0..background.n_rows())
            .map(|i| model.standardize_value(j, background.values[(i, bmap[j])]))
            .sum::<f64>()
            / n;
        phi[j] = beta * (model.standardize_value(j, x[xmap[j]]) - mean_std);
        base += beta * mean_std;
    }
    let row: Vec<f64> = xmap.iter().map(|&c| x[c]).collect();
    Ok(Attribution {
        key,
        features: model.feature_names.clone(),
        phi,
        se: vec![0.0; p],
        base,
        prediction: model.predict_row(&row),
    })
}

/// Permutation-sampling estimate for an arbitrary prediction function.
///
/// Each permutation draws one background row, starts from it and switches
/// features to their values in `x` in the permuted order; the change in the
/// prediction at each switch is that feature's marginal contribution.
pub fn shapley_permutation<F>(
    predict: F,
    key: RowKey,
    features: &[String],
    x: &[f64],
    background: &[Vec<f64>],
    n_permutations: usize,
    seed: u64,
) -> Result<Attribution>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n_permutations < MIN_PERMUTATIONS {
        return Err(Error::validation(format!(
            "shapley: need at least {MIN_PERMUTATIONS} permutations, got {n_permutations}"
        )));
    }
    if background.is_empty() {
        return Err(Error::validation("shapley: empty background"));
    }
    let p = x.len();
    if features.len() != p || background.iter().any(|b| b.len() != p) {
        return Err(Error::validation("shapley: row lengths disagree"));
    }

    let draws: Vec<Vec<f64>> = (0..n_permutations)
        .into_par_iter()
        .map(|k| {
            let mut rng = child_rng(seed, "shapley/permutation", k as u64);
            let mut z = background[rng.random_range(0..background.len())].clone();
            let mut order: Vec<usize> = (0..p).collect();
            order.shuffle(&mut rng);
            marginals(&predict, &mut z, x, &order)
        })
        .collect();

    let n = n_permutations as f64;
    let mut phi = vec![0.0; p];
    let mut se = vec![0.0; p];
    for j in 0..p {
        let mean = draws.iter().map(|d| d[j]).sum::<f64>() / n;
        let var = draws.iter().map(|d| (d[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        phi[j] = mean;
        se[j] = (var / n).sqrt();
    }
    let base = background.iter().map(|b| predict(b)).sum::<f64>() / background.len() as f64;
    Ok(Attribution {
        key,
        features: features.to_vec(),
        phi,
        se,
        base,
        prediction: predict(x),
    })
}

/// Walks every ordering of the features against a single reference row.
/// With one reference this is the Shapley value of the game
/// `v(S) = f(x_S, r_¬S)` without sampling error.
pub fn shapley_all_permutations<F>(predict: F, x: &[f64], reference: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let p = x.len();
    if reference.len() != p {
        return Err(Error::validation("shapley: row lengths disagree"));
    }
    if p > MAX_ENUMERATED_FEATURES {
        return Err(Error::validation(format!(
            "shapley: full enumeration limited to {MAX_ENUMERATED_FEATURES} features"
        )));
    }
    let mut total = vec![0.0; p];
    let mut count = 0usize;
    let mut order: Vec<usize> = (0..p).collect();
    // Heap's algorithm
    let mut c = vec![0usize; p];
    let mut visit = |order: &[usize]| {
        let mut z = reference.to_vec();
        for (t, m) in total.iter_mut().zip(marginals(&predict, &mut z, x, order)) {
            *t += m;
        }
        count += 1;
    };
    visit(&order);
    let mut i = 1;
    while i < p {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            visit(&order);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(total.into_iter().map(|t| t / count as f64).collect())
}

fn marginals<F: Fn(&[f64]) -> f64>(predict: &F, z: &mut [f64], x: &[f64], order: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let mut prev = predict(z);
    for &j in order {
        z[j] = x[j];
        let cur = predict(z);
        out[j] = cur - prev;
        prev = cur;
    }
    out
}

/// Features by mean |φ| over the attributions, largest first, ties broken
/// alphabetically.
pub fn rank_features(attributions: &[Attribution]) -> Result<Vec<(String, f64)>> {
    let first = attributions
        .first()
        .ok_or_else(|| Error::validation("rank_features: no attributions"))?;
    if attributions.iter().any(|a| a.features != first.features) {
        return Err(Error::validation("rank_features: attributions over different features"));
    }
    let n = attributions.len() as f64;
    let mut ranked: Vec<(String, f64)> = first
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| (f.clone(), attributions.iter().map(|a| a.phi[j].abs()).sum::<f64>() / n))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Exact attributions for the given instances against a background.
pub fn explain_rows(model: &EnModel, instances: &FeatureMatrix, background: &FeatureMatrix) -> Result<Vec<Attribution>> {
    (0..instances.n_rows())
        .into_par_iter()
        .map(|i| {
            shapley_linear_exact(
                model,
                instances.keys[i].clone(),
                instances.row(i),
                &instances.names,
                background,
            )
        })
        .collect()
}

/// Sampled attributions of a linear model, one derived seed per instance.
pub fn explain_rows_sampled(
    model: &EnModel,
    instances: &FeatureMatrix,
    background: &FeatureMatrix,
    n_permutations: usize,
    seed: u64,
) -> Result<Vec<Attribution>> {
    let bmap = model.column_map(&background.names)?;
    let xmap = model.column_map(&instances.names)?;
    let bg: Vec<Vec<f64>> = (0..background.n_rows())
        .map(|i| bmap.iter().map(|&c| background.values[(i, c)]).collect())
        .collect();
    (0..instances.n_rows())
        .map(|i| {
            let x: Vec<f64> = xmap.iter().map(|&c| instances.values[(i, c)]).collect();
            shapley_permutation(
                |r| model.predict_row(r),
                instances.keys[i].clone(),
                &model.feature_names,
                &x,
                &bg,
                n_permutations,
                child_seed(seed, "shapley/instance", i as u64),
            )
        })
        .collect()
}

/// `location_id,year,feature,phi,se`, one line per instance and feature.
pub fn write_shapley(path: &Path, attributions: &[Attribution]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["location_id", "year", "feature", "phi", "se"]).map_err(io)?;
    for a in attributions {
        for (j, f) in a.features.iter().enumerate() {
            w.write_record([
                a.key.location_id.clone(),
                a.key.year.to_string(),
                f.clone(),
                format!("{:?}", a.phi[j]),
                format!("{:?}", a.se[j]),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `rank,feature,mean_abs_phi`
pub fn write_importance(path: &Path, ranking: &[(String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["rank", "feature", "mean_abs_phi"]).map_err(io)?;
    for (r, (f, v)) in ranking.iter().enumerate() {
        w.write_record([(r + 1).to_string(), f.clone(), format!("{v:?}")]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
