use proptest::prelude::*;
use proptest::test_runner::RngSeed;

use nalgebra::{DMatrix, SymmetricEigen};

use histgdp::features::{eci, eci_direct};
use histgdp::numerics::{spearman, Matrix};

/// Binary matrix without empty rows or columns.
fn binary() -> impl Strategy<Value = Matrix> {
    (2usize..15, 2usize..12).prop_flat_map(|(r, c)| {
        prop::collection::vec(prop::bool::weighted(0.45), r * c).prop_map(move |bits| {
            let mut m = Matrix::new(r, c, bits.iter().map(|b| f64::from(u8::from(*b))).collect()).unwrap();
            for i in 0..r {
                m[(i, i % c)] = 1.0;
            }
            for k in 0..c {
                m[(k % r, k)] = 1.0;
            }
            m
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, rng_seed: RngSeed::Fixed(64), failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn eci_is_standardized_and_oriented(m in binary()) {
        let Ok(r) = eci(&m) else { return Ok(()) };
        if r.eci.iter().all(|v| *v == 0.0) { return Ok(()) }
        let n = r.eci.len() as f64;
        let mean = r.eci.iter().sum::<f64>() / n;
        let sd = (r.eci.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() <= 1e-9);
        prop_assert!((sd - 1.0).abs() <= 1e-9);
        let diversity: Vec<f64> = (0..m.rows()).map(|i| m.row(i).iter().sum()).collect();
        let rho = spearman(&r.eci, &diversity);
        prop_assert!(rho.is_nan() || rho >= 0.0);
    }

    #[test]
    fn row_relabeling_permutes_eci(m in binary(), shift in 1usize..20) {
        let rows = m.rows();
        let perm: Vec<usize> = (0..rows).map(|i| (i + shift) % rows).collect();
        let mut p = m.clone();
        for i in 0..rows {
            for k in 0..m.cols() {
                p[(i, k)] = m[(perm[i], k)];
            }
        }
        let (Ok(a), Ok(b)) = (eci(&m), eci(&p)) else { return Ok(()) };
        for i in 0..rows {
            prop_assert!((b.eci[i] - a.eci[perm[i]]).abs() <= 1e-9);
        }
    }

    #[test]
    fn iteration_is_a_fixed_point_of_the_mapping(m in binary()) {
        let Ok(r) = eci(&m) else { return Ok(()) };
        if r.eci.iter().all(|v| *v == 0.0) { return Ok(()) }
        let mut next = map_once(&m, &r.eci);
        zscore(&mut next);
        // the sign may flip under the mapping only for negative eigenvalues, which the
        // symmetrized map (PSD) does not have
        let diff = next.iter().zip(&r.eci).fold(0.0f64, |d, (x, y)| d.max((x - y).abs()));
        prop_assert!(diff <= 1e-7, "max change {diff:e}");
    }

    #[test]
    fn iteration_and_direct_solve_agree_with_a_spectral_gap(m in binary()) {
        let (Ok(a), Ok(b)) = (eci(&m), eci_direct(&m)) else { return Ok(()) };
        if a.eci.iter().all(|v| *v == 0.0) || b.eci.iter().all(|v| *v == 0.0) { return Ok(()) }
        // The iteration starts from diversity, so it can only find the second
        // eigenvector if the start has a component along it.
        let (gap, overlap) = spectrum(&m);
        if gap < 0.05 || overlap < 0.1 { return Ok(()) }
        let diff = a.eci.iter().zip(&b.eci).fold(0.0f64, |d, (x, y)| d.max((x - y).abs()));
        prop_assert!(diff <= 1e-4, "max difference {diff:e}");
    }
}

fn zscore(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
}

fn degrees(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let d = (0..m.rows()).map(|i| m.row(i).iter().sum()).collect();
    let u = (0..m.cols()).map(|k| m.column(k).iter().sum()).collect();
    (d, u)
}

/// One round of ECI ← mean over specialized occupations of their mean ECI.
fn map_once(m: &Matrix, e: &[f64]) -> Vec<f64> {
    let (d, u) = degrees(m);
    let pci: Vec<f64> = (0..m.cols()).map(|k| (0..m.rows()).map(|i| m[(i, k)] * e[i]).sum::<f64>() / u[k]).collect();
    (0..m.rows()).map(|i| (0..m.cols()).map(|k| m[(i, k)] * pci[k]).sum::<f64>() / d[i]).collect()
}

/// Gap between the second and third eigenvalues of the symmetrized map and
/// the relative overlap of the (transformed) diversity start vector with the
/// second eigenvector, both from an independent eigensolver.
fn spectrum(m: &Matrix) -> (f64, f64) {
    let (d, u) = degrees(m);
    let r = m.rows();
    let s = DMatrix::from_fn(r, r, |i, j| {
        (0..m.cols()).map(|k| m[(i, k)] * m[(j, k)] / u[k]).sum::<f64>() / (d[i] * d[j]).sqrt()
    });
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda = |i: usize| order.get(i).map_or(0.0, |&k| eig.eigenvalues[k]);
    let mut start = d.clone();
    zscore(&mut start);
    let y: Vec<f64> = start.iter().zip(&d).map(|(x, di)| x * di.sqrt()).collect();
    let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let w2 = eig.eigenvectors.column(order[1]);
    let overlap = y.iter().zip(w2.iter()).map(|(a, b)| a * b).sum::<f64>().abs() / norm;
    (lambda(1) - lambda(2), overlap)
}

#[test]
fn symmetric_rows_hide_the_second_eigenvector_from_the_iteration() {
    // Rows 1 and 2 mirror each other. The second eigenvector of the map is
    // antisymmetric in them (eigenvalue 1/2) and orthogonal to diversity, so
    // the iteration settles on the symmetric mode (eigenvalue 1/6) instead.
    let m = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0]]).unwrap();
    let it = eci(&m).unwrap();
    assert!((it.eci[1] - it.eci[2]).abs() < 1e-9);
    assert!(it.eci[1] > it.eci[0]);
    let direct = eci_direct(&m).unwrap();
    assert!(direct.eci[0].abs() < 1e-9);
    assert!((direct.eci[1] + direct.eci[2]).abs() < 1e-9);
}

#[test]
fn block_structure_ranks_diverse_rows_higher() {
    // rows 0–1 hold every occupation, rows 2–3 only the ubiquitous ones
    let m = Matrix::from_rows(&[
        vec![1.0, 1.0, 1.0, 1.0],
        vec![1.0, 1.0, 1.0, 0.0],
        vec![1.0, 1.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0, 0.0],
    ])
    .unwrap();
    let r = eci(&m).unwrap();
    assert!(r.eci.windows(2).all(|w| w[0] > w[1]), "{:?}", r.eci);
}
