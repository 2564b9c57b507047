//! Elastic-net regression.
//!
//! Loss: `‖y − Xβ‖² + λ(α‖β‖₁ + (1 − α)‖β‖²)`, no `1/2n` factor. `α = 1` is
//! the lasso, `α = 0` ridge. The solver works on the Gram matrix of a
//! standardized design (covariance updates), so a whole regularization path
//! costs one `XᵀX` product.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::CvSelectionRule;
use crate::error::{Error, Result};
use crate::numerics::{standardize, Matrix};
use crate::seed::child_rng;

pub const MAX_SWEEPS: usize = 100_000;
/// Bound on the curvature-scaled coordinate change `(x_jᵀx_j + λ(1−α))·|Δβ_j|`.
pub const TOLERANCE: f64 = 1e-7;
/// Relative bound on the optimality residual checked before returning.
const KKT_TOLERANCE: f64 = 1e-9;
/// λ_max for ridge is taken from this α.
const RIDGE_ALPHA_FLOOR: f64 = 0.01;
/// Sweeps between attempts to jump to the exact solution on the current support.
const ACTIVE_SET_EVERY: usize = 10;

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Sufficient statistics `XᵀX`, `Xᵀy` of a standardized, centered problem.
#[derive(Debug, Clone)]
pub struct GramProblem {
    p: usize,
    gram: Vec<f64>,
    xty: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CdSolution {
    pub beta: Vec<f64>,
    pub sweeps: usize,
    /// Largest raw coordinate change in the final sweep.
    pub max_delta: f64,
}

impl GramProblem {
    pub fn new(x: &Matrix, y_centered: &[f64]) -> Result<Self> {
        if x.rows() != y_centered.len() {
            return Err(Error::validation("design and response lengths differ"));
        }
        let p = x.cols();
        let mut gram = vec![0.0; p * p];
        let mut xty = vec![0.0; p];
        for i in 0..x.rows() {
            let row = x.row(i);
            for a in 0..p {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                xty[a] += ra * y_centered[i];
                let g = &mut gram[a * p..(a + 1) * p];
                for b in a..p {
                    g[b] += ra * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                gram[a * p + b] = gram[b * p + a];
            }
        }
        Ok(Self { p, gram, xty })
    }

    pub fn n_features(&self) -> usize {
        self.p
    }

    pub fn xty(&self) -> &[f64] {
        &self.xty
    }

    /// Smallest λ whose solution is all zeros: `2·max|x_jᵀy| / α`.
    pub fn lambda_max(&self, alpha: f64) -> f64 {
        let a = if alpha > 0.0 { alpha } else { RIDGE_ALPHA_FLOOR };
        let m = self.xty.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut lmax = 2.0 * m / a;
        // the solver compares against λα/2; make that product reach m exactly
        while lmax * a / 2.0 < m {
            lmax = f64::from_bits(lmax.to_bits() + 1);
        }
        lmax
    }

    /// `‖y − Xβ‖² − ‖y‖² + 2·l1·‖β‖₁ + l2·‖β‖²`.
    fn objective(&self, beta: &[f64], l1: f64, l2: f64) -> f64 {
        let g = self.gram_times(beta);
        beta.iter()
            .zip(&g)
            .zip(&self.xty)
            .map(|((b, gb), xy)| b * gb - 2.0 * xy * b + 2.0 * l1 * b.abs() + l2 * b * b)
            .sum()
    }

    /// Largest KKT residual at `beta`.
    pub fn kkt_residual(&self, beta: &[f64], alpha: f64, lambda: f64) -> f64 {
        let l1 = lambda * alpha / 2.0;
        let l2 = lambda * (1.0 - alpha);
        let p = self.p;
        (0..p)
            .map(|j| {
                let c: f64 = self.gram[j * p..(j + 1) * p].iter().zip(beta).map(|(g, b)| g * b).sum();
                let grad = self.xty[j] - c;
                if beta[j] != 0.0 {
                    (grad - l1 * beta[j].signum() - l2 * beta[j]).abs()
                } else {
                    (grad.abs() - l1).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    /// Cyclic coordinate descent from `warm` (or zeros; for pure ridge, from
    /// the Cholesky solution when it exists).
    pub fn solve(&self, alpha: f64, lambda: f64, warm: Option<&[f64]>) -> Result<CdSolution> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::validation(format!("alpha {alpha} outside [0, 1]")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::validation(format!("lambda {lambda} must be finite and non-negative")));
        }
        let p = self.p;
        let l1 = lambda * alpha / 2.0;
        let l2 = lambda * (1.0 - alpha);
        let mut beta = match warm {
            Some(w) if w.len() == p => w.to_vec(),
            Some(_) => return Err(Error::validation("warm start has the wrong length")),
            None if alpha == 0.0 => self.ridge_start(l2).unwrap_or_else(|| vec![0.0; p]),
            None => vec![0.0; p],
        };
        let kkt_tol = KKT_TOLERANCE * self.xty.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut c = self.gram_times(&beta);
        let mut max_delta = 0.0;
        for sweep in 1..=MAX_SWEEPS {
            let mut max_scaled = 0.0f64;
            max_delta = 0.0f64;
            for j in 0..p {
                let gjj = self.gram[j * p + j];
                let denom = gjj + l2;
                let old = beta[j];
                let new = if denom > 0.0 {
                    soft_threshold(self.xty[j] - c[j] + gjj * old, l1) / denom
                } else {
                    0.0
                };
                let d = new - old;
                if d != 0.0 {
                    beta[j] = new;
                    for (ck, g) in c.iter_mut().zip(&self.gram[j * p..(j + 1) * p]) {
                        *ck += g * d;
                    }
                    max_scaled = max_scaled.max(denom * d.abs());
                    max_delta = max_delta.max(d.abs());
                }
            }
            let settled = max_scaled < TOLERANCE;
            if settled {
                // refresh accumulated updates before judging optimality
                c = self.gram_times(&beta);
                if self.kkt_residual(&beta, alpha, lambda) <= kkt_tol {
                    return Ok(CdSolution {
                        beta,
                        sweeps: sweep,
                        max_delta,
                    });
                }
            }
            if settled || sweep % ACTIVE_SET_EVERY == 0 {
                if let Some(b) = self.active_set_step(&beta, l1, l2) {
                    // near the optimum objective differences drown in rounding
                    let (new, old) = (self.objective(&b, l1, l2), self.objective(&beta, l1, l2));
                    if new <= old + 1e-12 * (1.0 + old.abs()) {
                        beta = b;
                        c = self.gram_times(&beta);
                    }
                }
            }
        }
        Err(Error::numerical(format!(
            "coordinate descent did not converge in {MAX_SWEEPS} sweeps (alpha {alpha}, lambda {lambda}, last max change {max_delta:e})"
        )))
    }

    fn gram_times(&self, beta: &[f64]) -> Vec<f64> {
        let p = self.p;
        (0..p)
            .map(|j| self.gram[j * p..(j + 1) * p].iter().zip(beta).map(|(g, b)| g * b).sum())
            .collect()
    }

    /// `(XᵀX + l2·I)⁻¹Xᵀy` by Cholesky; `None` when not positive definite.
    fn ridge_start(&self, l2: f64) -> Option<Vec<f64>> {
        let all: Vec<usize> = (0..self.p).collect();
        let chol = Cholesky::new(&self.gram, self.p, &all, l2);
        chol.dependent.is_none().then(|| chol.solve(self.xty.clone()))
    }

    /// Newton polish on the current support, for iterates whose support and
    /// signs have settled. If the support is linearly dependent, first move
    /// along the null direction that lowers the ℓ¹ term until a coordinate
    /// reaches zero (the fit is unchanged); then solve the stationarity
    /// equations on the support, truncating the step where a coordinate
    /// would change sign and dropping that coordinate. Every move lowers the
    /// objective; coordinates that still need to enter are left to the next
    /// sweep.
    fn active_set_step(&self, beta: &[f64], l1: f64, l2: f64) -> Option<Vec<f64>> {
        let p = self.p;
        let mut beta = beta.to_vec();
        for _ in 0..p {
            let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
            if active.is_empty() {
                return None;
            }
            let chol = Cholesky::new(&self.gram, p, &active, l2);
            if let Some(d) = chol.dependent {
                let j = active[d];
                let rhs = active[..d].iter().map(|&k| self.gram[k * p + j]).collect();
                let w = chol.solve(rhs);
                let mut v = vec![0.0; p];
                v[j] = 1.0;
                for (&k, wk) in active[..d].iter().zip(&w) {
                    v[k] = -wk;
                }
                let slope: f64 = active.iter().map(|&k| beta[k].signum() * v[k]).sum();
                if slope > 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                let (k, t) = active
                    .iter()
                    .filter(|&&k| v[k] != 0.0 && -beta[k] / v[k] > 0.0)
                    .map(|&k| (k, -beta[k] / v[k]))
                    .min_by(|a, b| a.1.total_cmp(&b.1))?;
                for (b, vk) in beta.iter_mut().zip(&v) {
                    *b += t * vk;
                }
                beta[k] = 0.0;
                continue;
            }
            let c = self.gram_times(&beta);
            let grad = active
                .iter()
                .map(|&j| self.xty[j] - c[j] - l1 * beta[j].signum() - l2 * beta[j])
                .collect();
            let step = chol.solve(grad);
            // stop at the first coordinate that would change sign and drop it
            let cut = active
                .iter()
                .zip(&step)
                .filter(|(&j, dj)| (beta[j] + **dj) * beta[j] <= 0.0)
                .map(|(&j, dj)| (j, -beta[j] / dj))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match cut {
                Some((k, t)) => {
                    for (&j, dj) in active.iter().zip(&step) {
                        beta[j] += t * dj;
                    }
                    beta[k] = 0.0;
                }
                None => {
                    for (&j, dj) in active.iter().zip(&step) {
                        beta[j] += dj;
                    }
                    return Some(beta);
                }
            }
        }
        None
    }
}

/// Cholesky factor of `G_AA + l2·I`, stopped at the first vanishing pivot.
struct Cholesky {
    l: Vec<f64>,
    /// Factored leading size.
    m: usize,
    /// Position in the active list of the first linearly dependent coordinate.
    dependent: Option<usize>,
}

impl Cholesky {
    fn new(gram: &[f64], p: usize, active: &[usize], l2: f64) -> Self {
        let n = active.len();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (ai, aj) = (active[i], active[j]);
                let mut s = gram[ai * p + aj] + if i == j { l2 } else { 0.0 };
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 1e-12 * (gram[ai * p + ai] + l2).max(1.0) {
                        return Self {
                            l: compact(&l, n, i),
                            m: i,
                            dependent: Some(i),
                        };
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Self { l, m: n, dependent: None }
    }

    /// Solves with the factored leading block; `z.len()` must equal `m`.
    fn solve(&self, mut z: Vec<f64>) -> Vec<f64> {
        let (l, m) = (&self.l, self.m);
        for i in 0..m {
            for k in 0..i {
                z[i] -= l[i * m + k] * z[k];
            }
            z[i] /= l[i * m + i];
        }
        for i in (0..m).rev() {
            for k in i + 1..m {
                z[i] -= l[k * m + i] * z[k];
            }
            z[i] /= l[i * m + i];
        }
        z
    }
}

/// Leading `m × m` block of a row-major `n × n` matrix.
fn compact(l: &[f64], n: usize, m: usize) -> Vec<f64> {
    (0..m).flat_map(|i| l[i * n..i * n + m].iter().copied()).collect()
}

/// A fitted model. Coefficients live on the standardized scale; columns that
/// were constant in training carry a zero coefficient and `sd = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnModel {
    pub alpha: f64,
    pub lambda: f64,
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub selected_features: Vec<String>,
    pub sweeps: usize,
    pub max_delta: f64,
    /// SHA-256 of the raw training matrix and response.
    pub training_hash: String,
}

impl EnModel {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .map(|j| self.coefficients[j])
    }

    /// Standardized value of feature `j` for a raw value.
    pub fn standardize_value(&self, j: usize, raw: f64) -> f64 {
        if self.sds[j] > 0.0 {
            (raw - self.means[j]) / self.sds[j]
        } else {
            0.0
        }
    }

    /// Prediction for a raw row given in the model's own column order.
    pub fn predict_row(&self, raw: &[f64]) -> f64 {
        self.intercept
            + (0..self.coefficients.len())
                .filter(|&j| self.coefficients[j] != 0.0)
                .map(|j| self.coefficients[j] * self.standardize_value(j, raw[j]))
                .sum::<f64>()
    }

    /// Names in `columns` the model does not use.
    pub fn unused_columns<'a>(&self, columns: &'a [String]) -> Vec<&'a String> {
        columns.iter().filter(|c| !self.feature_names.contains(c)).collect()
    }

    /// Positions of the model's features in `columns`.
    pub fn column_map(&self, columns: &[String]) -> Result<Vec<usize>> {
        self.feature_names
            .iter()
            .map(|f| {
                columns
                    .iter()
                    .position(|c| c == f)
                    .ok_or_else(|| Error::validation(format!("prediction matrix lacks model column `{f}`")))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::validation(format!("model serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::validation(format!("model parse: {e}")))
    }
}

/// Log10 GDP predictions for a raw-scale matrix whose columns are `columns`.
/// Extra columns are ignored; see [`EnModel::unused_columns`].
pub fn en_predict(model: &EnModel, x: &Matrix, columns: &[String]) -> Result<Vec<f64>> {
    let map = model.column_map(columns)?;
    let mut row = vec![0.0; map.len()];
    Ok((0..x.rows())
        .map(|i| {
            let src = x.row(i);
            for (r, &c) in row.iter_mut().zip(&map) {
                *r = src[c];
            }
            model.predict_row(&row)
        })
        .collect())
}

pub fn training_hash(x: &Matrix, y: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update((x.rows() as u64).to_le_bytes());
    h.update((x.cols() as u64).to_le_bytes());
    for v in x.values().iter().chain(y) {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// A raw design standardized and reduced to its Gram form, ready for any
/// number of fits.
#[derive(Debug, Clone)]
pub struct PreparedDesign {
    names: Vec<String>,
    kept: Vec<usize>,
    means: Vec<f64>,
    sds: Vec<f64>,
    y_mean: f64,
    problem: GramProblem,
    hash: String,
}

impl PreparedDesign {
    pub fn new(x: &Matrix, names: &[String], y: &[f64]) -> Result<Self> {
        if names.len() != x.cols() {
            return Err(Error::validation("feature names do not match design columns"));
        }
        if x.rows() != y.len() || y.is_empty() {
            return Err(Error::validation("design and response lengths differ or are empty"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite response"));
        }
        let st = standardize(x);
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let mut means = vec![0.0; x.cols()];
        let mut sds = vec![0.0; x.cols()];
        for (k, &j) in st.kept.iter().enumerate() {
            means[j] = st.means[k];
            sds[j] = st.sds[k];
        }
        for j in 0..x.cols() {
            if sds[j] == 0.0 && x.rows() > 0 {
                means[j] = x[(0, j)];
            }
        }
        Ok(Self {
            names: names.to_vec(),
            problem: GramProblem::new(&st.x, &yc)?,
            kept: st.kept,
            means,
            sds,
            y_mean,
            hash: training_hash(x, y),
        })
    }

    pub fn lambda_max(&self, alpha: f64) -> f64 {
        self.problem.lambda_max(alpha)
    }

    pub fn problem(&self) -> &GramProblem {
        &self.problem
    }

    /// Solution on the kept (non-constant) columns.
    pub fn solve(&self, alpha: f64, lambda: f64, warm: Option<&[f64]>) -> Result<CdSolution> {
        self.problem.solve(alpha, lambda, warm)
    }

    pub fn model(&self, alpha: f64, lambda: f64, sol: &CdSolution) -> EnModel {
        let mut coefficients = vec![0.0; self.names.len()];
        for (k, &j) in self.kept.iter().enumerate() {
            coefficients[j] = sol.beta[k];
        }
        let selected_features = self
            .names
            .iter()
            .zip(&coefficients)
            .filter(|(_, b)| b.abs() > 0.0)
            .map(|(n, _)| n.clone())
            .collect();
        EnModel {
            alpha,
            lambda,
            feature_names: self.names.clone(),
            coefficients,
            intercept: self.y_mean,
            means: self.means.clone(),
            sds: self.sds.clone(),
            selected_features,
            sweeps: sol.sweeps,
            max_delta: sol.max_delta,
            training_hash: self.hash.clone(),
        }
    }

    pub fn fit(&self, alpha: f64, lambda: f64) -> Result<EnModel> {
        let sol = self.solve(alpha, lambda, None)?;
        Ok(self.model(alpha, lambda, &sol))
    }
}

fn default_names(x: &Matrix) -> Vec<String> {
    x.col_labels()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| (0..x.cols()).map(|j| format!("x{j}")).collect())
}

/// Fit on an already standardized design (columns mean 0, population sd 1).
pub fn en_fit(x: &Matrix, y: &[f64], alpha: f64, lambda: f64, warm_start: Option<&[f64]>) -> Result<EnModel> {
    let n = x.rows() as f64;
    for j in 0..x.cols() {
        let c = x.column(j);
        let mean = c.iter().sum::<f64>() / n;
        let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if mean.abs() > 1e-6 || (sd - 1.0).abs() > 1e-6 {
            return Err(Error::validation(format!(
                "column {j} is not standardized (mean {mean:e}, sd {sd})"
            )));
        }
    }
    if x.rows() != y.len() || y.is_empty() {
        return Err(Error::validation("design and response lengths differ or are empty"));
    }
    let y_mean = y.iter().sum::<f64>() / n;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let sol = GramProblem::new(x, &yc)?.solve(alpha, lambda, warm_start)?;
    let names = default_names(x);
    let selected_features = names
        .iter()
        .zip(&sol.beta)
        .filter(|(_, b)| b.abs() > 0.0)
        .map(|(n, _)| n.clone())
        .collect();
    Ok(EnModel {
        alpha,
        lambda,
        feature_names: names,
        coefficients: sol.beta,
        intercept: y_mean,
        means: vec![0.0; x.cols()],
        sds: vec![1.0; x.cols()],
        selected_features,
        sweeps: sol.sweeps,
        max_delta: sol.max_delta,
        training_hash: training_hash(x, y),
    })
}

/// Fit on a raw design; standardization is estimated from `x`.
pub fn en_fit_raw(x: &Matrix, names: &[String], y: &[f64], alpha: f64, lambda: f64) -> Result<EnModel> {
    PreparedDesign::new(x, names, y)?.fit(alpha, lambda)
}

/// Geometric grid of `n_lambda` values from λ_max down to `λ_max·ratio`.
pub fn lambda_grid(lambda_max: f64, n_lambda: usize, ratio: f64) -> Vec<f64> {
    if n_lambda == 1 {
        return vec![lambda_max];
    }
    let step = ratio.ln() / (n_lambda - 1) as f64;
    (0..n_lambda)
        .map(|i| if i == 0 { lambda_max } else { lambda_max * (step * i as f64).exp() })
        .collect()
}

/// Descending λ grid for standardized `x` and response `y`.
pub fn lambda_path(x: &Matrix, y: &[f64], alpha: f64, n_lambda: usize, ratio: f64) -> Result<Vec<f64>> {
    let y_mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let lmax = GramProblem::new(x, &yc)?.lambda_max(alpha);
    Ok(lambda_grid(lmax, n_lambda, ratio))
}

/// Hyperparameter grid: one descending λ path per α.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvGrid {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<Vec<f64>>,
}

impl CvGrid {
    /// Paths computed on the standardized full design.
    pub fn for_design(x: &Matrix, names: &[String], y: &[f64], alphas: &[f64], n_lambda: usize, ratio: f64) -> Result<Self> {
        let prepared = PreparedDesign::new(x, names, y)?;
        Ok(Self {
            alphas: alphas.to_vec(),
            lambdas: alphas
                .iter()
                .map(|&a| lambda_grid(prepared.lambda_max(a), n_lambda, ratio))
                .collect(),
        })
    }

    pub fn single(alpha: f64, lambda: f64) -> Self {
        Self {
            alphas: vec![alpha],
            lambdas: vec![vec![lambda]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvCell {
    pub alpha: f64,
    pub lambda: f64,
    pub mean_mse: f64,
    pub sd_mse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvResult {
    pub cells: Vec<CvCell>,
    pub alpha: f64,
    pub lambda: f64,
    /// Arg-min `(α, λ)` of every fold separately.
    pub fold_optima: Vec<(f64, f64)>,
    pub rule: CvSelectionRule,
    pub k: usize,
}

/// Index of the best cell: lowest error, ties toward larger λ, then grid order.
fn best_cell(cells: impl Iterator<Item = (f64, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, (lambda, err)) in cells.enumerate() {
        let better = match best {
            None => true,
            Some((_, bl, be)) => err < be || (err == be && lambda > bl),
        };
        if better && err.is_finite() {
            best = Some((i, lambda, err));
        }
    }
    best.map(|b| b.0)
}

/// Deterministic fold assignment: seeded shuffle, then `k` contiguous blocks.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::validation(format!("{k} folds for {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut child_rng(seed, "cv-shuffle", 0));
    Ok((0..k).map(|f| order[f * n / k..(f + 1) * n / k].to_vec()).collect())
}

/// k-fold cross-validated elastic net over `grid`. Folds are standardized on
/// their own training rows; every λ path is fitted with warm starts.
pub fn en_cv_grid(
    x: &Matrix,
    names: &[String],
    y: &[f64],
    grid: &CvGrid,
    k: usize,
    seed: u64,
    rule: CvSelectionRule,
) -> Result<CvResult> {
    let n = x.rows();
    let folds = fold_assignment(n, k, seed)?;
    // errors[fold][alpha][lambda]
    let errors: Vec<Vec<Vec<f64>>> = folds
        .par_iter()
        .map(|test| -> Result<Vec<Vec<f64>>> {
            let mut is_test = vec![false; n];
            test.iter().for_each(|&i| is_test[i] = true);
            let train: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
            let xtr = x.select_rows(&train);
            let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let xte = x.select_rows(test);
            let yte: Vec<f64> = test.iter().map(|&i| y[i]).collect();
            let prepared = PreparedDesign::new(&xtr, names, &ytr)?;
            grid.alphas
                .par_iter()
                .zip(&grid.lambdas)
                .map(|(&alpha, lambdas)| {
                    let mut warm: Option<Vec<f64>> = None;
                    lambdas
                        .iter()
                        .map(|&lambda| {
                            let sol = prepared.solve(alpha, lambda, warm.as_deref())?;
                            let model = prepared.model(alpha, lambda, &sol);
                            warm = Some(sol.beta);
                            let pred = en_predict(&model, &xte, names)?;
                            Ok(pred.iter().zip(&yte).map(|(p, o)| (p - o).powi(2)).sum::<f64>() / yte.len() as f64)
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (a, (&alpha, lambdas)) in grid.alphas.iter().zip(&grid.lambdas).enumerate() {
        for (l, &lambda) in lambdas.iter().enumerate() {
            let fold_err: Vec<f64> = errors.iter().map(|f| f[a][l]).collect();
            let mean = fold_err.iter().sum::<f64>() / k as f64;
            let sd = (fold_err.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt();
            cells.push(CvCell {
                alpha,
                lambda,
                mean_mse: mean,
                sd_mse: sd,
            });
        }
    }
    let pick = |errs: Vec<f64>| -> Result<usize> {
        best_cell(cells.iter().map(|c| c.lambda).zip(errs))
            .ok_or_else(|| Error::numerical("cross-validation produced no finite error"))
    };
    let fold_optima = (0..k)
        .map(|f| {
            let errs = errors[f].iter().flatten().copied().collect();
            pick(errs).map(|i| (cells[i].alpha, cells[i].lambda))
        })
        .collect::<Result<Vec<_>>>()?;
    let (alpha, lambda) = match rule {
        CvSelectionRule::MinMean => {
            let i = pick(cells.iter().map(|c| c.mean_mse).collect())?;
            (cells[i].alpha, cells[i].lambda)
        }
        CvSelectionRule::FoldAverage => (
            fold_optima.iter().map(|o| o.0).sum::<f64>() / k as f64,
            fold_optima.iter().map(|o| o.1).sum::<f64>() / k as f64,
        ),
    };
    Ok(CvResult {
        cells,
        alpha,
        lambda,
        fold_optima,
        rule,
        k,
    })
}

/// [`en_cv_grid`] over the default path construction.
#[allow(clippy::too_many_arguments)]
pub fn en_cv(
    x: &Matrix,
    names: &[String],
    y: &[f64],
    alpha_grid: &[f64],
    n_lambda: usize,
    lambda_ratio: f64,
    k: usize,
    seed: u64,
    rule: CvSelectionRule,
) -> Result<CvResult> {
    if k > x.rows() {
        return Err(Error::validation(format!("{k} folds requested for {} rows", x.rows())));
    }
    let grid = CvGrid::for_design(x, names, y, alpha_grid, n_lambda, lambda_ratio)?;
    en_cv_grid(x, names, y, &grid, k, seed, rule)
}
