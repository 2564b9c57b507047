use super::matrix::Matrix;
use super::svd::svd;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Rank of the intercept-augmented design.
    pub rank: usize,
    /// True when the minimum-norm pseudo-inverse solution was used.
    pub rank_deficient: bool,
}

impl OlsFit {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Least squares with an intercept column prepended to `x`.
///
/// Solved through the SVD pseudo-inverse, so rank-deficient designs return
/// the minimum-norm minimizer and are flagged.
pub fn ols_fit(x: &Matrix, y: &[f64]) -> Result<OlsFit> {
    if x.rows() != y.len() {
        return Err(Error::validation(format!(
            "design has {} rows but response has {}",
            x.rows(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::validation("least squares on zero rows"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite response"));
    }
    let p = x.cols() + 1;
    let mut data = Vec::with_capacity(x.rows() * p);
    for i in 0..x.rows() {
        data.push(1.0);
        data.extend_from_slice(x.row(i));
    }
    let design = Matrix::new(x.rows(), p, data)?;
    let dec = svd(&design)?;

    // β = V S⁺ Uᵀ y over the numerically non-zero singular values
    let mut beta = vec![0.0; p];
    for k in 0..dec.rank {
        let uty: f64 = (0..dec.u.rows()).map(|i| dec.u[(i, k)] * y[i]).sum();
        let w = uty / dec.s[k];
        for (j, b) in beta.iter_mut().enumerate() {
            *b += dec.v[(j, k)] * w;
        }
    }
    Ok(OlsFit {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        rank: dec.rank,
        rank_deficient: dec.rank < p,
    })
}
