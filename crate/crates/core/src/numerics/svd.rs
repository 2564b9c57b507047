//! Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! Column pairs of a working copy of the input are rotated until every pair
//! is orthogonal to a relative tolerance. The column norms are then the
//! singular values, the normalized columns the left singular vectors, and the
//! accumulated rotations the right singular vectors. Wide inputs are handled
//! through their transpose.

use super::matrix::Matrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-12;

/// Thin SVD `m = U diag(S) Vᵀ` with `r = min(rows, cols)` components.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// rows × r, orthonormal columns.
    pub u: Matrix,
    /// Descending, non-negative.
    pub s: Vec<f64>,
    /// cols × r, orthonormal columns.
    pub v: Matrix,
    /// Number of singular values above the numerical-zero cutoff.
    pub rank: usize,
    pub sweeps: usize,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.s.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.v.transpose()).expect("shapes agree")
    }
}

pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::validation("svd of an empty matrix"));
    }
    if m.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("svd input contains non-finite values"));
    }
    if m.rows() >= m.cols() {
        let mut r = jacobi_tall(m)?;
        fix_signs(&mut r);
        Ok(r)
    } else {
        let t = jacobi_tall(&m.transpose())?;
        let mut r = SvdResult {
            u: t.v,
            s: t.s,
            v: t.u,
            rank: t.rank,
            sweeps: t.sweeps,
        };
        fix_signs(&mut r);
        Ok(r)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn jacobi_tall(m: &Matrix) -> Result<SvdResult> {
    let (rows, n) = (m.rows(), m.cols());
    // column-major working copies
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    // columns below the rank cutoff are numerically zero; rotating them
    // against others only shuffles rounding noise
    // the same threshold decides the rank below, so a column left unrotated
    // is never counted as a direction
    let frob2: f64 = a.iter().map(|c| dot(c, c)).sum();
    let cutoff = rows.max(n) as f64 * f64::EPSILON * frob2.sqrt();
    let negligible = cutoff * cutoff;

    let mut sweeps = 0;
    let mut converged = n < 2;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::numerical(format!(
                "one-sided Jacobi SVD of a {rows}x{n} matrix did not converge in {MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0
                    || alpha.min(beta) <= negligible
                    || gamma.abs() <= OFF_DIAGONAL_TOL * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = a.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = v.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
            }
        }
        converged = !rotated;
    }

    let norms: Vec<f64> = a.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));


    let mut u_cols: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut v_cols = Vec::with_capacity(n);
    let mut rank = 0;
    for &j in &order {
        if norms[j] > cutoff && norms[j] > 0.0 {
            rank += 1;
            u_cols.push(Some(a[j].iter().map(|x| x / norms[j]).collect()));
            s.push(norms[j]);
        } else {
            u_cols.push(None);
            s.push(0.0);
        }
        v_cols.push(v[j].clone());
    }
    let u_cols = complete_basis(u_cols, rows);

    Ok(SvdResult {
        u: Matrix::from_columns(&u_cols, rows)?,
        s,
        v: Matrix::from_columns(&v_cols, n)?,
        rank,
        sweeps,
    })
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let (a, b) = (*xi, *yi);
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

/// Fills the missing left vectors (numerically zero singular values) with an
/// orthonormal completion drawn from the standard basis.
///
/// Each step takes the basis vector with the largest component outside the
/// current span, so the completion cannot run out of candidates while the
/// span is short of `dim`.
fn complete_basis(cols: Vec<Option<Vec<f64>>>, dim: usize) -> Vec<Vec<f64>> {
    let mut done: Vec<Vec<f64>> = cols.iter().flatten().cloned().collect();
    // squared distance of each e_i from the current span
    let mut outside: Vec<f64> = (0..dim)
        .map(|i| 1.0 - done.iter().map(|d| d[i] * d[i]).sum::<f64>())
        .collect();
    let mut out = Vec::with_capacity(cols.len());
    for c in cols {
        match c {
            Some(c) => out.push(c),
            None => {
                let best = (0..dim)
                    .max_by(|&i, &j| outside[i].total_cmp(&outside[j]).then(j.cmp(&i)))
                    .expect("non-empty basis");
                let mut e = vec![0.0; dim];
                e[best] = 1.0;
                // two Gram-Schmidt passes
                for _ in 0..2 {
                    for d in &done {
                        let proj = dot(&e, d);
                        for (ei, di) in e.iter_mut().zip(d) {
                            *ei -= proj * di;
                        }
                    }
                }
                let norm = dot(&e, &e).sqrt();
                assert!(norm > 1e-8, "basis completion exhausted");
                e.iter_mut().for_each(|x| *x /= norm);
                for (o, x) in outside.iter_mut().zip(&e) {
                    *o -= x * x;
                }
                done.push(e.clone());
                out.push(e);
            }
        }
    }
    out
}

/// Largest-magnitude entry of every U column positive; V columns follow.
fn fix_signs(r: &mut SvdResult) {
    for j in 0..r.u.cols() {
        let mut best = 0;
        for i in 0..r.u.rows() {
            if r.u[(i, j)].abs() > r.u[(best, j)].abs() {
                best = i;
            }
        }
        if r.u[(best, j)] < 0.0 {
            for i in 0..r.u.rows() {
                r.u[(i, j)] = -r.u[(i, j)];
            }
            for i in 0..r.v.rows() {
                r.v[(i, j)] = -r.v[(i, j)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_singular_values() {
        let r = svd(&Matrix::identity(2)).unwrap();
        assert_eq!(r.s, vec![1.0, 1.0]);
    }

    #[test]
    fn diagonal_recovers_entries() {
        let m = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let r = svd(&m).unwrap();
        assert_eq!(r.s, vec![3.0, 2.0]);
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((r.u[(i, j)].abs() - e).abs() < 1e-14);
                assert!((r.v[(i, j)].abs() - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rank_one_tall_matrix() {
        // NᵀN = diag(25, 0)
        let m = Matrix::from_rows(&[vec![3.0, 0.0], vec![4.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let r = svd(&m).unwrap();
        assert!((r.s[0] - 5.0).abs() < 1e-14);
        assert_eq!(r.s[1], 0.0);
        assert_eq!(r.rank, 1);
        let utu = r.u.transpose().matmul(&r.u).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((utu[(i, j)] - e).abs() < 1e-12);
            }
        }
        assert!((r.u[(0, 0)] - 0.6).abs() < 1e-14 && (r.u[(1, 0)] - 0.8).abs() < 1e-14);
    }

    #[test]
    fn wide_matrix_goes_through_transpose() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let r = svd(&m).unwrap();
        assert_eq!((r.u.rows(), r.u.cols(), r.v.rows(), r.v.cols()), (2, 2, 3, 2));
        let rec = r.reconstruct();
        for (a, b) in rec.values().iter().zip(m.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_matrix_is_fine() {
        let r = svd(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(r.s, vec![0.0, 0.0]);
        assert_eq!(r.rank, 0);
    }

    #[test]
    fn sign_convention_holds() {
        let m = Matrix::from_rows(&[vec![-1.0, 0.2], vec![-3.0, 0.1], vec![0.5, -2.0]]).unwrap();
        let r = svd(&m).unwrap();
        for j in 0..r.u.cols() {
            let col = r.u.column(j);
            let big = col
                .iter()
                .copied()
                .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            assert!(big > 0.0);
        }
    }
}
