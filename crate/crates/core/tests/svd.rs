use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

use histgdp::numerics::{svd, Matrix};

fn matrix() -> impl Strategy<Value = Matrix> {
    (1usize..8, 1usize..8).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c).prop_map(move |d| Matrix::new(r, c, d).unwrap())
    })
}

fn na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.values())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, rng_seed: RngSeed::Fixed(128), failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn factorization_is_exact_and_orthonormal(m in matrix()) {
        let r = svd(&m).unwrap();
        let norm = m.frobenius_norm();
        let err = (na(&r.reconstruct()) - na(&m)).norm();
        prop_assert!(err <= 1e-10 * norm.max(1e-300) || norm == 0.0);
        for q in [&r.u, &r.v] {
            let g = na(q).transpose() * na(q);
            prop_assert!((g - DMatrix::identity(q.cols(), q.cols())).abs().max() <= 1e-10);
        }
        prop_assert!(r.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(r.s.iter().all(|s| *s >= 0.0));
    }

    #[test]
    fn singular_values_match_gram_eigenvalues(m in matrix()) {
        let r = svd(&m).unwrap();
        let a = na(&m);
        let mut eig: Vec<f64> = SymmetricEigen::new(a.transpose() * &a).eigenvalues.iter().copied().collect();
        eig.sort_by(|x, y| y.total_cmp(x));
        let scale = eig.first().copied().unwrap_or(0.0).max(1.0);
        for (s, e) in r.s.iter().zip(&eig) {
            prop_assert!((s * s - e.max(0.0)).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn repeated_columns_lower_the_rank(m in matrix()) {
        // a dependent column only caps the rank when columns are the short side
        prop_assume!(m.cols() >= 2 && m.cols() <= m.rows());
        let mut d = m.clone();
        for i in 0..d.rows() {
            d[(i, 1)] = 2.0 * d[(i, 0)];
        }
        let full = svd(&m).unwrap().rank;
        let r = svd(&d).unwrap();
        prop_assert!(r.rank < m.cols());
        prop_assert!(r.rank <= full);
    }
}

#[test]
fn known_two_by_two() {
    // NᵀN = [[25, -15], [-15, 25]] has eigenvalues 40 and 10
    let m = Matrix::from_rows(&[vec![4.0, 0.0], vec![3.0, -5.0]]).unwrap();
    let r = svd(&m).unwrap();
    approx::assert_relative_eq!(r.s[0], 40f64.sqrt(), max_relative = 1e-14);
    approx::assert_relative_eq!(r.s[1], 10f64.sqrt(), max_relative = 1e-14);
}
