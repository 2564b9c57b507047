//! Specialization (RCA), economic complexity and SVD factors of the
//! location × occupation count matrices.

use super::counts::CountTensor;
use crate::error::{Error, Result};
use crate::ingest::Flow;
use crate::numerics::{ranks, spearman, svd, Matrix};

const MAX_ECI_ITERATIONS: usize = 1000;
const ECI_TOL: f64 = 1e-9;
/// Correlations below this are treated as ties when orienting ECI.
const ORIENT_EPS: f64 = 1e-9;
/// Relative slack on the `RCA ≥ 1` test so that ratios equal to 1 in exact
/// arithmetic are not lost to rounding.
const RCA_SLACK: f64 = 1e-12;

/// Binary specialization matrix over the locations and occupations with a
/// non-zero weighted total.
#[derive(Debug, Clone)]
pub struct RcaResult {
    pub m: Matrix,
    /// Rows of `m` in terms of tensor location indices.
    pub kept_locations: Vec<usize>,
    /// Columns of `m` in terms of tensor occupation indices.
    pub kept_occupations: Vec<usize>,
    pub dropped_locations: Vec<String>,
    pub dropped_occupations: Vec<String>,
}

pub fn rca_matrix(counts: &CountTensor, flow: Flow) -> Result<RcaResult> {
    let weighted: Vec<Vec<f64>> = (0..counts.n_locations())
        .map(|i| counts.weighted_row(flow, i).to_vec())
        .collect();
    let r = rca_from_weights(&weighted)?;
    Ok(RcaResult {
        dropped_locations: complement(&r.kept_locations, counts.n_locations())
            .map(|i| counts.locations[i].clone())
            .collect(),
        dropped_occupations: complement(&r.kept_occupations, counts.n_occupations())
            .map(|k| counts.occupations[k].clone())
            .collect(),
        ..r
    })
}

fn complement(kept: &[usize], n: usize) -> impl Iterator<Item = usize> + '_ {
    (0..n).filter(move |i| !kept.contains(i))
}

/// RCA on a raw weight matrix (rows = locations). Dropped rows and columns
/// are named by their index.
pub fn rca_from_weights(n: &[Vec<f64>]) -> Result<RcaResult> {
    let rows = n.len();
    let cols = n.first().map_or(0, Vec::len);
    let row_tot: Vec<f64> = n.iter().map(|r| r.iter().sum()).collect();
    let col_tot: Vec<f64> = (0..cols).map(|k| n.iter().map(|r| r[k]).sum()).collect();
    let grand: f64 = row_tot.iter().sum();
    if !(grand > 0.0) {
        return Err(Error::validation("RCA of an all-zero count matrix"));
    }
    let kept_rows: Vec<usize> = (0..rows).filter(|&i| row_tot[i] > 0.0).collect();
    let kept_cols: Vec<usize> = (0..cols).filter(|&k| col_tot[k] > 0.0).collect();
    let mut m = Matrix::zeros(kept_rows.len(), kept_cols.len());
    for (a, &i) in kept_rows.iter().enumerate() {
        for (b, &k) in kept_cols.iter().enumerate() {
            // (N_ik / N_i) / (N_k / N)
            let rca = (n[i][k] * grand) / (row_tot[i] * col_tot[k]);
            if rca >= 1.0 - RCA_SLACK {
                m[(a, b)] = 1.0;
            }
        }
    }
    Ok(RcaResult {
        m,
        dropped_locations: complement(&kept_rows, rows).map(|i| i.to_string()).collect(),
        dropped_occupations: complement(&kept_cols, cols).map(|k| k.to_string()).collect(),
        kept_locations: kept_rows,
        kept_occupations: kept_cols,
    })
}

#[derive(Debug, Clone)]
pub struct EciResult {
    pub eci: Vec<f64>,
    pub pci: Vec<f64>,
    pub iterations: usize,
    /// Single row or column, or no variation: ECI is the zero vector.
    pub degenerate: bool,
}

fn zscore(v: &mut [f64]) -> bool {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
    if sd <= 1e-12 * scale {
        v.iter_mut().for_each(|x| *x = 0.0);
        return false;
    }
    v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    true
}

fn rank_key(v: &[f64]) -> Vec<f64> {
    // round away sub-tolerance jitter so exact ties keep their rank
    let rounded: Vec<f64> = v.iter().map(|x| (x / ECI_TOL).round()).collect();
    ranks(&rounded)
}

/// Economic and occupation complexity from a binary specialization matrix.
///
/// Iterates `ECI ← mean PCI of specialized occupations`,
/// `PCI ← mean ECI of specialized locations`, z-scoring every round, from
/// diversity as the starting vector. Sign is fixed so that ECI is
/// non-negatively rank-correlated with diversity.
pub fn eci(m: &Matrix) -> Result<EciResult> {
    let (rows, cols) = (m.rows(), m.cols());
    if rows <= 1 || cols <= 1 {
        return Ok(EciResult {
            eci: vec![0.0; rows],
            pci: vec![0.0; cols],
            iterations: 0,
            degenerate: true,
        });
    }
    let diversity: Vec<f64> = (0..rows).map(|i| m.row(i).iter().sum()).collect();
    let ubiquity: Vec<f64> = (0..cols).map(|k| m.column(k).iter().sum()).collect();
    if diversity.iter().any(|d| *d == 0.0) || ubiquity.iter().any(|u| *u == 0.0) {
        return Err(Error::validation(
            "ECI input has an all-zero row or column; drop them first",
        ));
    }

    let to_pci = |e: &[f64]| -> Vec<f64> {
        (0..cols)
            .map(|k| (0..rows).map(|i| m[(i, k)] * e[i]).sum::<f64>() / ubiquity[k])
            .collect()
    };
    let to_eci = |p: &[f64]| -> Vec<f64> {
        (0..rows)
            .map(|i| m.row(i).iter().zip(p).map(|(a, b)| a * b).sum::<f64>() / diversity[i])
            .collect()
    };

    let mut current = diversity.clone();
    if !zscore(&mut current) {
        return Ok(uniform(rows, cols));
    }
    let mut iterations = 0;
    loop {
        if iterations == MAX_ECI_ITERATIONS {
            return Err(Error::numerical(format!(
                "ECI iteration on a {rows}x{cols} matrix did not converge in {MAX_ECI_ITERATIONS} iterations"
            )));
        }
        iterations += 1;
        let mut next = to_eci(&to_pci(&current));
        if !zscore(&mut next) {
            return Ok(uniform(rows, cols));
        }
        let delta = next
            .iter()
            .zip(&current)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        let same_ranks = rank_key(&next) == rank_key(&current);
        current = next;
        if delta < ECI_TOL && same_ranks {
            break;
        }
    }

    orient(&mut current, &diversity);
    let mut pci = to_pci(&current);
    zscore(&mut pci);
    Ok(EciResult {
        eci: current,
        pci,
        iterations,
        degenerate: false,
    })
}

/// Flips `v` so it is non-negatively rank-correlated with diversity. A rank
/// correlation of exactly zero (or undefined) falls back to the linear
/// correlation, then to the third moment, so both solvers pick the same sign.
fn orient(v: &mut [f64], diversity: &[f64]) {
    let n = v.len() as f64;
    let md = diversity.iter().sum::<f64>() / n;
    let linear: f64 = v.iter().zip(diversity).map(|(x, d)| x * (d - md)).sum();
    let skew: f64 = v.iter().map(|x| x * x * x).sum();
    let sign = [spearman(v, diversity), linear, skew]
        .into_iter()
        .find(|s| s.abs() > ORIENT_EPS)
        .unwrap_or(0.0);
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn uniform(rows: usize, cols: usize) -> EciResult {
    EciResult {
        eci: vec![0.0; rows],
        pci: vec![0.0; cols],
        iterations: 0,
        degenerate: false,
    }
}

/// ECI from the second eigenvector of the symmetrized location-location
/// map `D^-1/2 M U^-1 Mᵀ D^-1/2`. This is the fixed point the iteration
/// approaches whenever diversity has a component along that eigenvector; it
/// is used when the iteration stalls because the second and third
/// eigenvalues nearly coincide.
pub fn eci_direct(m: &Matrix) -> Result<EciResult> {
    let (rows, cols) = (m.rows(), m.cols());
    let diversity: Vec<f64> = (0..rows).map(|i| m.row(i).iter().sum()).collect();
    let ubiquity: Vec<f64> = (0..cols).map(|k| m.column(k).iter().sum()).collect();
    let mut s = Matrix::zeros(rows, rows);
    for i in 0..rows {
        for j in 0..rows {
            let v: f64 = (0..cols).map(|k| m[(i, k)] * m[(j, k)] / ubiquity[k]).sum();
            s[(i, j)] = v / (diversity[i] * diversity[j]).sqrt();
        }
    }
    let dec = svd(&s)?;
    let mut current: Vec<f64> = (0..rows).map(|i| dec.u[(i, 1)] / diversity[i].sqrt()).collect();
    if !zscore(&mut current) {
        return Ok(uniform(rows, cols));
    }
    orient(&mut current, &diversity);
    let mut pci: Vec<f64> = (0..cols)
        .map(|k| (0..rows).map(|i| m[(i, k)] * current[i]).sum::<f64>() / ubiquity[k])
        .collect();
    zscore(&mut pci);
    Ok(EciResult {
        eci: current,
        pci,
        iterations: MAX_ECI_ITERATIONS,
        degenerate: false,
    })
}

/// ECI per tensor location for one flow, falling back to [`eci_direct`]
/// when the iteration does not converge. Locations without any weighted
/// count get 0. Returns `(values, degenerate, fell_back)`.
pub fn eci_for_flow(counts: &CountTensor, flow: Flow) -> Result<(Vec<f64>, bool, bool)> {
    let mut out = vec![0.0; counts.n_locations()];
    let total: f64 = (0..counts.n_locations()).map(|i| counts.weighted_total(flow, i)).sum();
    if !(total > 0.0) {
        return Ok((out, true, false));
    }
    let rca = rca_matrix(counts, flow)?;
    let (e, fell_back) = match eci(&rca.m) {
        Ok(e) => (e, false),
        Err(Error::Numerical(_)) => (eci_direct(&rca.m)?, true),
        Err(e) => return Err(e),
    };
    for (pos, &i) in rca.kept_locations.iter().enumerate() {
        out[i] = e.eci[pos];
    }
    Ok((out, e.degenerate, fell_back))
}

/// SVD factors: first `n_factors` left singular vectors of `log10(1 + N)`.
/// Returns one vector per factor (length = locations) and the number of
/// factors that had to be zero-filled because the rank was too small.
pub fn svd_factors(counts: &CountTensor, flow: Flow, n_factors: usize) -> Result<(Vec<Vec<f64>>, usize)> {
    let (rows, cols) = (counts.n_locations(), counts.n_occupations());
    let mut factors = vec![vec![0.0; rows]; n_factors];
    if rows == 0 || cols == 0 {
        return Ok((factors, n_factors));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        data.extend(counts.weighted_row(flow, i).iter().map(|v| (1.0 + v).log10()));
    }
    let n = Matrix::new(rows, cols, data)?;
    let dec = svd(&n)?;
    let usable = dec.rank.min(n_factors);
    for (f, factor) in factors.iter_mut().enumerate().take(usable) {
        *factor = dec.u.column(f);
    }
    Ok((factors, n_factors - usable))
}
