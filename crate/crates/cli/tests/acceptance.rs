//! Acceptance suite: one PASS / FAIL / NOT RUN line per criterion.
//!
//! Criteria 1 and 2 need the published source tables; point
//! `HISTGDP_REFERENCE_DATA` at a directory holding `biographies.csv`,
//! `locations.csv` and `gdp.csv` to run them. `ACCEPTANCE_ONLY=3,4`
//! restricts the run to the listed criteria.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use histgdp::config::RunConfig;
use histgdp::elasticnet::{en_fit, en_fit_raw, EnModel};
use histgdp::evaluation::evaluate_models;
use histgdp::explain::{explain_rows, rank_features, shapley_linear_exact, shapley_permutation};
use histgdp::features::{eci, eci_direct, FeatureMatrix, RowKey};
use histgdp::ingest::{Dataset, InputPaths};
use histgdp::numerics::{spearman, svd, Matrix};
use histgdp::pipeline::{
    audit_rescaling, population_proxies, read_estimates, run_full_with_cache, write_estimates, FeatureCache,
    PeriodGrid, RecordKind,
};
use histgdp::seed::{child_rng, Rng as SeededRng};
use histgdp::synthetic::{generate, SyntheticSpec, SyntheticWorld};
use histgdp::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
    NotRun,
}

struct Verdict {
    id: &'static str,
    status: Status,
    detail: String,
}

fn verdict(id: &'static str, ok: bool, detail: String) -> Verdict {
    Verdict {
        id,
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> (bool, String)) -> (bool, String) {
    let t = Instant::now();
    let (ok, detail) = f();
    let el = t.elapsed();
    let in_time = el < limit;
    (
        ok && in_time,
        format!("{detail}; runtime {:.1}s (limit {}s)", el.as_secs_f64(), limit.as_secs()),
    )
}

fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| uniform(rng, -1.0, 1.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.values())
}

/// Columns centered with population sd 1.
fn standardized(m: &Matrix) -> Matrix {
    let (n, p) = (m.rows(), m.cols());
    let mut out = m.clone();
    for j in 0..p {
        let c = m.column(j);
        let mean = c.iter().sum::<f64>() / n as f64;
        let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        for i in 0..n {
            out[(i, j)] = (m[(i, j)] - mean) / sd;
        }
    }
    out
}

/// Reduced hyperparameter grid for the many-world criteria.
fn reduced_config(seed: u64) -> RunConfig {
    RunConfig {
        alpha_grid: vec![0.1, 0.5, 1.0],
        n_lambda: 20,
        k_folds: 5,
        seed,
        ..RunConfig::default()
    }
}

/// 40 countries, no regions, 10 occupations, snapshots 1300–1850.
fn recovery_world(seed: u64, config: &RunConfig) -> SyntheticWorld {
    let spec = SyntheticSpec {
        n_countries: 40,
        regions_per_country: 0,
        n_occupations: 10,
        seed,
        ..SyntheticSpec::default()
    };
    generate(&spec, config).unwrap()
}

// --- 1, 2 -------------------------------------------------------------------

fn reference_data() -> Option<PathBuf> {
    std::env::var_os("HISTGDP_REFERENCE_DATA").map(PathBuf::from)
}

fn load_reference(dir: &Path, config: &RunConfig) -> Dataset {
    let paths = InputPaths {
        biographies: dir.join("biographies.csv"),
        locations: dir.join("locations.csv"),
        gdp: dir.join("gdp.csv"),
    };
    Dataset::load(&paths, config.min_birth_year, config.max_reject_fraction).unwrap()
}

fn criterion_1() -> Verdict {
    let Some(dir) = reference_data() else {
        return Verdict {
            id: "1",
            status: Status::NotRun,
            detail: "published dataset not available (set HISTGDP_REFERENCE_DATA)".into(),
        };
    };
    let config = RunConfig::default();
    let data = load_reference(&dir, &config);
    let grid = PeriodGrid::standard();
    let cache = FeatureCache::build(&data.biographies, &data.locations, &grid, &config).unwrap();
    let dist = evaluate_models(&data, &cache, &grid, &config, 500, config.seed).unwrap();
    let s = &dist.summary;
    let med = |m: &Option<histgdp::evaluation::MetricSummary>| m.as_ref().map_or(f64::NAN, |m| m.median);
    let (r2f, r2b, maef, maeb) = (med(&s.r2_full), med(&s.r2_baseline), med(&s.mae_full), med(&s.mae_baseline));
    let ok = (r2f - 0.901).abs() <= 0.03
        && (r2b - 0.862).abs() <= 0.03
        && (maef - 0.226).abs() <= 0.03
        && (maeb - 0.29).abs() <= 0.03;
    verdict(
        "1",
        ok,
        format!("median R² full {r2f:.3} (0.901±0.03), baseline {r2b:.3} (0.862±0.03); median MAE full {maef:.3} (0.226±0.03), baseline {maeb:.3} (0.29±0.03)"),
    )
}

fn criterion_2() -> Verdict {
    let Some(dir) = reference_data() else {
        return Verdict {
            id: "2",
            status: Status::NotRun,
            detail: "published dataset not available (set HISTGDP_REFERENCE_DATA)".into(),
        };
    };
    let config = RunConfig::default();
    let data = load_reference(&dir, &config);
    let grid = PeriodGrid::standard();
    let cache = FeatureCache::build(&data.biographies, &data.locations, &grid, &config).unwrap();
    let run = run_full_with_cache(&data, &config, &grid, &cache, true).unwrap();
    let all_gated_ok = run.records.iter().filter(|r| r.kind == RecordKind::Estimate).all(|r| {
        run.chain
            .rows
            .get(&RowKey::new(r.location_id.clone(), r.year))
            .is_some_and(|row| row.passes_gate)
    });
    let c = &run.report.counts;
    verdict(
        "2",
        all_gated_ok && c.source == 1336,
        format!("source {} (expected 1336), estimates {}, all estimates gate-eligible: {all_gated_ok}", c.source, c.estimate),
    )
}

// --- 3: elastic net -----------------------------------------------------------

fn ols_oracle(x: &Matrix, y: &[f64]) -> (f64, Vec<f64>) {
    let (n, p) = (x.rows(), x.cols());
    let mut xa = DMatrix::from_element(n, p + 1, 1.0);
    for i in 0..n {
        for j in 0..p {
            xa[(i, j + 1)] = x[(i, j)];
        }
    }
    let sol = xa.svd(true, true).solve(&DVector::from_column_slice(y), 1e-14).unwrap();
    (sol[0], sol.iter().skip(1).copied().collect())
}

fn raw_coefficients(m: &EnModel) -> (f64, Vec<f64>) {
    let b: Vec<f64> = m
        .coefficients
        .iter()
        .zip(&m.sds)
        .map(|(c, s)| if *s > 0.0 { c / s } else { 0.0 })
        .collect();
    let intercept = m.intercept - b.iter().zip(&m.means).map(|(b, mu)| b * mu).sum::<f64>();
    (intercept, b)
}

/// Largest violation of the subgradient conditions, computed from scratch.
fn kkt_oracle(x: &Matrix, y: &[f64], beta: &[f64], alpha: f64, lambda: f64) -> f64 {
    let xs = to_na(x);
    let ym = y.iter().sum::<f64>() / y.len() as f64;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - ym));
    let b = DVector::from_column_slice(beta);
    let grad = xs.transpose() * (yc - &xs * &b);
    let (l1, l2) = (lambda * alpha / 2.0, lambda * (1.0 - alpha));
    (0..beta.len())
        .map(|j| {
            if beta[j] != 0.0 {
                (grad[j] - l1 * beta[j].signum() - l2 * beta[j]).abs()
            } else {
                (grad[j].abs() - l1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn criterion_3() -> Verdict {
    let (ok, detail) = timed(Duration::from_secs(10), || {
        let mut rng = child_rng(3, "acceptance/elasticnet", 0);
        let names = |p: usize| (0..p).map(|j| format!("x{j}")).collect::<Vec<_>>();

        let mut ols_err = 0.0f64;
        for _ in 0..20 {
            let p = rng.random_range(1..=10);
            let n = rng.random_range(3 * p + 5..=60);
            let x = random_matrix(&mut rng, n, p);
            let y: Vec<f64> = (0..n).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
            let m = en_fit_raw(&x, &names(p), &y, 1.0, 0.0).unwrap();
            let (b0, b) = raw_coefficients(&m);
            let (o0, o) = ols_oracle(&x, &y);
            ols_err = ols_err.max((b0 - o0).abs());
            for (a, c) in b.iter().zip(&o) {
                ols_err = ols_err.max((a - c).abs());
            }
        }

        let mut ridge_err = 0.0f64;
        for _ in 0..20 {
            let p = rng.random_range(1..=15);
            let n = rng.random_range(5..=40);
            let x = standardized(&random_matrix(&mut rng, n, p));
            let y: Vec<f64> = (0..n).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
            let lambda = 10f64.powf(uniform(&mut rng, -2.0, 1.5));
            let m = en_fit(&x, &y, 0.0, lambda, None).unwrap();
            let xs = to_na(&x);
            let ym = y.iter().sum::<f64>() / n as f64;
            let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
            let a = xs.transpose() * &xs + DMatrix::identity(p, p) * lambda;
            let oracle = a.cholesky().unwrap().solve(&(xs.transpose() * yc));
            for (b, o) in m.coefficients.iter().zip(oracle.iter()) {
                ridge_err = ridge_err.max((b - o).abs());
            }
        }

        let mut uni_err = 0.0f64;
        for _ in 0..20 {
            let n = rng.random_range(5..=40);
            let x = standardized(&random_matrix(&mut rng, n, 1));
            let y: Vec<f64> = (0..n).map(|i| 0.7 * x[(i, 0)] + uniform(&mut rng, -1.0, 1.0)).collect();
            let alpha = uniform(&mut rng, 0.0, 1.0);
            let lambda = 10f64.powf(uniform(&mut rng, -2.0, 1.5));
            let m = en_fit(&x, &y, alpha, lambda, None).unwrap();
            let ym = y.iter().sum::<f64>() / n as f64;
            let xty: f64 = (0..n).map(|i| x[(i, 0)] * (y[i] - ym)).sum();
            let xtx: f64 = (0..n).map(|i| x[(i, 0)].powi(2)).sum();
            let g = lambda * alpha / 2.0;
            let s = xty.signum() * (xty.abs() - g).max(0.0);
            let oracle = s / (xtx + lambda * (1.0 - alpha));
            uni_err = uni_err.max((m.coefficients[0] - oracle).abs());
        }

        let mut kkt = 0.0f64;
        for _ in 0..100 {
            let p = rng.random_range(1..=25);
            let n = rng.random_range(5..=50);
            let x = standardized(&random_matrix(&mut rng, n, p));
            let y: Vec<f64> = (0..n)
                .map(|i| (0..p.min(3)).map(|j| x[(i, j)]).sum::<f64>() + uniform(&mut rng, -1.0, 1.0))
                .collect();
            let alpha = uniform(&mut rng, 0.0, 1.0);
            let lambda = 10f64.powf(uniform(&mut rng, -3.0, 1.5));
            let m = en_fit(&x, &y, alpha, lambda, None).unwrap();
            kkt = kkt.max(kkt_oracle(&x, &y, &m.coefficients, alpha, lambda));
        }
        (
            ols_err <= 1e-8 && ridge_err <= 1e-8 && uni_err <= 1e-10 && kkt <= 1e-6,
            format!(
                "λ=0 vs OLS {ols_err:.1e} (≤1e-8); α=0 vs ridge {ridge_err:.1e} (≤1e-8); univariate {uni_err:.1e} (≤1e-10); max KKT {kkt:.1e} over 100 (≤1e-6)"
            ),
        )
    });
    verdict("3", ok, detail)
}

// --- 4: SVD --------------------------------------------------------------------

fn criterion_4() -> Verdict {
    let (ok, detail) = timed(Duration::from_secs(5), || {
        let mut rng = child_rng(4, "acceptance/svd", 0);
        let (mut rec, mut orth, mut sv) = (0.0f64, 0.0f64, 0.0f64);
        for t in 0..200 {
            let rows = rng.random_range(1..=6);
            let cols = rng.random_range(1..=6);
            let mut m = random_matrix(&mut rng, rows, cols);
            if t % 4 == 0 && cols > 1 {
                // duplicate a column: rank deficiency
                for i in 0..rows {
                    m[(i, cols - 1)] = m[(i, 0)];
                }
            }
            let r = svd(&m).unwrap();
            let diff = r.reconstruct().values().iter().zip(m.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            rec = rec.max(diff.sqrt() / m.frobenius_norm());
            for q in [&r.u, &r.v] {
                let g = to_na(q).transpose() * to_na(q);
                let e = (g - DMatrix::identity(q.cols(), q.cols())).abs().max();
                orth = orth.max(e);
            }
            let a = to_na(&m);
            let mut eig: Vec<f64> = SymmetricEigen::new(a.transpose() * a).eigenvalues.iter().copied().collect();
            eig.sort_by(|a, b| b.total_cmp(a));
            for (s, e) in r.s.iter().zip(&eig) {
                sv = sv.max((s * s - e.max(0.0)).abs());
            }
        }
        (
            rec <= 1e-10 && orth <= 1e-10 && sv <= 1e-8,
            format!("reconstruction {rec:.1e} (≤1e-10); orthonormality {orth:.1e} (≤1e-10); σ² vs eig(NᵀN) {sv:.1e} (≤1e-8); 200 instances ≤6×6"),
        )
    });
    verdict("4", ok, detail)
}

// --- 5: Shapley ------------------------------------------------------------------

fn feature_matrix(m: Matrix) -> FeatureMatrix {
    let keys = (0..m.rows()).map(|i| RowKey::new("L", i as i32)).collect();
    let names = (0..m.cols()).map(|j| format!("x{j}")).collect();
    FeatureMatrix::new(keys, names, m, histgdp::config::Scale::Log10p1).unwrap()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shapley values from the coalition formula, with absent features drawn
/// from every background row in turn.
fn brute_force(model: &EnModel, x: &[f64], background: &Matrix) -> Vec<f64> {
    let p = x.len();
    let value = |mask: usize| -> f64 {
        let mut total = 0.0;
        for b in 0..background.rows() {
            let z: Vec<f64> = (0..p)
                .map(|j| if mask >> j & 1 == 1 { x[j] } else { background[(b, j)] })
                .collect();
            total += model.predict_row(&z);
        }
        total / background.rows() as f64
    };
    let v: Vec<f64> = (0..1usize << p).map(value).collect();
    let pf = factorial(p);
    (0..p)
        .map(|i| {
            (0..1usize << p)
                .filter(|s| s >> i & 1 == 0)
                .map(|s| {
                    let k = s.count_ones() as usize;
                    factorial(k) * factorial(p - k - 1) / pf * (v[s | 1 << i] - v[s])
                })
                .sum()
        })
        .collect()
}

fn criterion_5() -> Verdict {
    let (ok, detail) = timed(Duration::from_secs(60), || {
        let mut rng = child_rng(5, "acceptance/shapley", 0);
        let (mut brute, mut eff, mut mc_worst, mut n_attr) = (0.0f64, 0.0f64, 0.0f64, 0usize);
        for p in 1..=10 {
            let n = 30;
            let x = random_matrix(&mut rng, n, p);
            let y: Vec<f64> = (0..n)
                .map(|i| (0..p).map(|j| (j as f64 - 2.0) * x[(i, j)]).sum::<f64>() + uniform(&mut rng, -0.5, 0.5))
                .collect();
            let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
            let model = en_fit_raw(&x, &names, &y, 0.5, 0.05).unwrap();
            let bg = feature_matrix(random_matrix(&mut rng, 12, p));
            for _ in 0..3 {
                let inst: Vec<f64> = (0..p).map(|_| uniform(&mut rng, -1.5, 1.5)).collect();
                let a = shapley_linear_exact(&model, RowKey::new("L", 0), &inst, &names, &bg).unwrap();
                n_attr += 1;
                eff = eff.max(a.efficiency_gap().abs());
                for (e, b) in a.phi.iter().zip(brute_force(&model, &inst, &bg.values)) {
                    brute = brute.max((e - b).abs());
                }
            }
        }
        // sampled estimator against the exact values
        for p in [3usize, 6] {
            let n = 40;
            let x = random_matrix(&mut rng, n, p);
            let y: Vec<f64> = (0..n).map(|i| (0..p).map(|j| (j as f64 + 1.0) * x[(i, j)]).sum::<f64>()).collect();
            let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
            let model = en_fit_raw(&x, &names, &y, 0.5, 0.01).unwrap();
            let bg = feature_matrix(random_matrix(&mut rng, 50, p));
            let bg_rows: Vec<Vec<f64>> = (0..50).map(|i| bg.row(i).to_vec()).collect();
            for k in 0..2u64 {
                let inst: Vec<f64> = (0..p).map(|_| uniform(&mut rng, -1.5, 1.5)).collect();
                let exact = shapley_linear_exact(&model, RowKey::new("L", 0), &inst, &names, &bg).unwrap();
                let est = shapley_permutation(
                    |r| model.predict_row(r),
                    RowKey::new("L", 0),
                    &names,
                    &inst,
                    &bg_rows,
                    10_000,
                    k,
                )
                .unwrap();
                for j in 0..p {
                    let dev = (est.phi[j] - exact.phi[j]).abs();
                    let ratio = if dev == 0.0 { 0.0 } else { dev / est.se[j] };
                    mc_worst = mc_worst.max(ratio);
                }
            }
        }
        (
            brute <= 1e-9 && eff <= 1e-9 && mc_worst <= 3.0,
            format!(
                "exact vs 2^|F| enumeration {brute:.1e} (≤1e-9, |F|≤10); efficiency {eff:.1e} over {n_attr} attributions (≤1e-9); permutation worst |Δ|/SE {mc_worst:.2} at 10,000 permutations (≤3)"
            ),
        )
    });
    verdict("5", ok, detail)
}

// --- 6: ECI ----------------------------------------------------------------------

fn random_binary(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    let density = uniform(rng, 0.2, 0.7);
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for k in 0..cols {
            if rng.random::<f64>() < density {
                m[(i, k)] = 1.0;
            }
        }
    }
    // no empty rows or columns
    for i in 0..rows {
        if m.row(i).iter().all(|v| *v == 0.0) {
            m[(i, rng.random_range(0..cols))] = 1.0;
        }
    }
    for k in 0..cols {
        if m.column(k).iter().all(|v| *v == 0.0) {
            m[(rng.random_range(0..rows), k)] = 1.0;
        }
    }
    m
}

fn eci_values(m: &Matrix) -> Vec<f64> {
    match eci(m) {
        Ok(r) => r.eci,
        Err(Error::Numerical(_)) => eci_direct(m).unwrap().eci,
        Err(e) => panic!("{e}"),
    }
}

fn criterion_6() -> Verdict {
    let (ok, detail) = timed(Duration::from_secs(10), || {
        let mut rng = child_rng(6, "acceptance/eci", 0);
        let (mut moment, mut min_rho, mut relabel) = (0.0f64, f64::INFINITY, 0.0f64);
        for _ in 0..50 {
            let rows = rng.random_range(2..=20);
            let cols = rng.random_range(2..=15);
            let m = random_binary(&mut rng, rows, cols);
            let e = eci_values(&m);
            let n = e.len() as f64;
            let mean = e.iter().sum::<f64>() / n;
            let sd = (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            let diversity: Vec<f64> = (0..rows).map(|i| m.row(i).iter().sum()).collect();
            if e.iter().any(|v| *v != 0.0) {
                moment = moment.max(mean.abs()).max((sd - 1.0).abs());
                let rho = spearman(&e, &diversity);
                if !rho.is_nan() {
                    min_rho = min_rho.min(rho);
                }
            }
            // relabel rows and columns
            let mut rp: Vec<usize> = (0..rows).collect();
            let mut cp: Vec<usize> = (0..cols).collect();
            rand::seq::SliceRandom::shuffle(rp.as_mut_slice(), &mut rng);
            rand::seq::SliceRandom::shuffle(cp.as_mut_slice(), &mut rng);
            let mut mp = Matrix::zeros(rows, cols);
            for i in 0..rows {
                for k in 0..cols {
                    mp[(i, k)] = m[(rp[i], cp[k])];
                }
            }
            let ep = eci_values(&mp);
            for i in 0..rows {
                relabel = relabel.max((ep[i] - e[rp[i]]).abs());
            }
        }
        (
            moment <= 1e-9 && min_rho >= 0.0 && relabel <= 1e-9,
            format!("|mean|, |sd−1| ≤ {moment:.1e} (≤1e-9); min Spearman with diversity {min_rho:.3} (≥0); relabeling {relabel:.1e} (≤1e-9); 50 matrices ≤20×15"),
        )
    });
    verdict("6", ok, detail)
}

// --- 7: synthetic recovery -----------------------------------------------------------

fn criterion_7() -> Verdict {
    let (ok, detail) = timed(Duration::from_secs(600), || {
        let grid = PeriodGrid::standard();
        let (mut wins, mut top_hits, mut pooled_hits) = (0, 0, 0);
        for s in 0..100u64 {
            let config = reduced_config(s);
            let world = recovery_world(s, &config);
            let data = world.dataset();
            let cache = FeatureCache::build(&data.biographies, &data.locations, &grid, &config).unwrap();
            let dist = evaluate_models(&data, &cache, &grid, &config, 10, s).unwrap();
            let (b, f) = (&dist.summary.r2_baseline, &dist.summary.r2_full);
            if let (Some(b), Some(f)) = (b, f) {
                if f.median > b.median {
                    wins += 1;
                }
            }
            let run = run_full_with_cache(&data, &config, &grid, &cache, false).unwrap();
            let in_top = |attributions: &[histgdp::explain::Attribution]| {
                let ranking = rank_features(attributions).unwrap();
                let top: Vec<&str> = ranking.iter().take(10).map(|r| r.0.as_str()).collect();
                world.true_features.iter().all(|t| top.contains(&t.as_str()))
            };
            let per_period: Vec<_> = run
                .chain
                .models
                .iter()
                .map(|m| explain_rows(&m.model, &m.training, &m.training).unwrap())
                .collect();
            if !per_period.is_empty() && per_period.iter().all(|a| in_top(a)) {
                top_hits += 1;
            }
            // Diagnostic only: mean |φ| per feature over every period's
            // attributions (the earliest period has no init_gdp column).
            let mut pooled: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
            for a in per_period.iter().flatten() {
                for (f, phi) in a.features.iter().zip(&a.phi) {
                    let e = pooled.entry(f.as_str()).or_default();
                    e.0 += phi.abs();
                    e.1 += 1;
                }
            }
            let mut pooled: Vec<(&str, f64)> = pooled.into_iter().map(|(f, (s, n))| (f, s / n as f64)).collect();
            pooled.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
            let top: Vec<&str> = pooled.iter().take(10).map(|p| p.0).collect();
            if world.true_features.iter().all(|t| top.contains(&t.as_str())) {
                pooled_hits += 1;
            }
        }
        (
            wins >= 95 && top_hits >= 90,
            format!("full beats baseline in median test R² in {wins}/100 runs (≥95); true features in every period's Shapley top 10 in {top_hits}/100 (≥90); pooled-ranking diagnostic {pooled_hits}/100"),
        )
    });
    verdict("7", ok, detail)
}

// --- 8: bootstrap coverage --------------------------------------------------------------

fn criterion_8() -> Verdict {
    let (ok, detail) = timed(Duration::from_secs(900), || {
        let grid = PeriodGrid::standard();
        let (mut covered, mut covered_mean, mut cases) = (0usize, 0usize, 0usize);
        for r in 0..500u64 {
            let config = reduced_config(r);
            let world = recovery_world(10_000 + r, &config);
            let data = world.dataset();
            let cache = FeatureCache::build(&data.biographies, &data.locations, &grid, &config).unwrap();
            let run = run_full_with_cache(&data, &config, &grid, &cache, true).unwrap();
            for rec in run.records.iter().filter(|x| x.kind == RecordKind::Estimate) {
                let truth = world.truth[&RowKey::new(rec.location_id.clone(), rec.year)];
                let inside = |v: f64| rec.ci_low <= v && v <= rec.ci_high;
                cases += 1;
                covered += usize::from(inside(10f64.powf(truth.log10)));
                covered_mean += usize::from(inside(10f64.powf(truth.mean_log10)));
            }
        }
        let rate = covered as f64 / cases as f64;
        let rate_mean = covered_mean as f64 / cases as f64;
        (
            (0.85..=0.95).contains(&rate),
            format!(
                "90% CIs cover the true value in {:.1}% of {cases} estimates over 500 repetitions (85–95%); noise-free mean covered in {:.1}%",
                100.0 * rate,
                100.0 * rate_mean
            ),
        )
    });
    verdict("8", ok, detail)
}

// --- 9: rescaling audit ----------------------------------------------------------------

fn criterion_9() -> Vec<Verdict> {
    let grid = PeriodGrid::standard();
    let dir = tempfile::tempdir().unwrap();
    let (mut csv_worst, mut mem_worst, mut checked) = (0.0f64, 0.0f64, 0usize);
    for s in 0..5u64 {
        let config = reduced_config(s);
        let world = generate(&SyntheticSpec { seed: s, ..SyntheticSpec::default() }, &config).unwrap();
        let data = world.dataset();
        let cache = FeatureCache::build(&data.biographies, &data.locations, &grid, &config).unwrap();
        let run = run_full_with_cache(&data, &config, &grid, &cache, true).unwrap();
        let years: Vec<i32> = cache.years.keys().copied().collect();
        let proxies = population_proxies(&data.biographies, &data.locations, &years, config.window_years);

        let mem = audit_rescaling(&run.records, &proxies, &data.locations, 1e-9).unwrap();
        mem_worst = mem_worst.max(mem.max_relative_error);
        checked += mem.checked;

        let path = dir.path().join(format!("estimates_{s}.csv"));
        write_estimates(&path, &run.records).unwrap();
        let read = read_estimates(&path).unwrap();
        let file = audit_rescaling(&read, &proxies, &data.locations, 1e-9).unwrap();
        csv_worst = csv_worst.max(file.max_relative_error);
    }
    vec![
        verdict(
            "9",
            checked > 0 && csv_worst <= 1e-9,
            format!("auditor over estimates.csv: max relative error {csv_worst:.1e} over {checked} rescaled country-years (≤1e-9)"),
        ),
        verdict(
            "9 (records)",
            checked > 0 && mem_worst <= 1e-9,
            format!("auditor over the records before serialization: max relative error {mem_worst:.1e} (≤1e-9)"),
        ),
    ]
}

// --- 10: determinism ---------------------------------------------------------------------

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        out.insert(e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap());
    }
    out
}

fn criterion_10() -> Verdict {
    let work = tempfile::tempdir().unwrap();
    let inputs = work.path().join("inputs");
    let world = generate(&SyntheticSpec { seed: 21, ..SyntheticSpec::default() }, &RunConfig::default()).unwrap();
    world.write_csvs(&inputs).unwrap();
    std::fs::write(inputs.join("proxies.csv"), {
        let mut s = String::from("location_id,year,value\n");
        for (k, t) in world.truth.iter().step_by(3) {
            s += &format!("{},{},{}\n", k.location_id, k.year, t.log10 * 2.0 + 1.0);
        }
        s
    })
    .unwrap();
    let out = work.path().join("out");
    let bin = env!("CARGO_BIN_EXE_histgdp");
    let common: Vec<String> = [
        "--biographies",
        inputs.join("biographies.csv").to_str().unwrap(),
        "--locations",
        inputs.join("locations.csv").to_str().unwrap(),
        "--gdp",
        inputs.join("gdp.csv").to_str().unwrap(),
        "--proxies",
        inputs.join("proxies.csv").to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
        "--alpha-grid",
        "0.1,0.5,1",
        "--n-lambda",
        "20",
        "--k-folds",
        "5",
        "--n-splits",
        "6",
        "--bootstrap-b",
        "60",
        "--seed",
        "7",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    let reference = work.path().join("reference");
    let mut differing = Vec::new();
    let mut failures = Vec::new();
    let subcommands: [(&str, &[&str]); 6] = [
        ("validate", &[]),
        ("features", &[]),
        ("estimate", &[]),
        ("evaluate", &[]),
        ("explain", &["--permutations", "20"]),
        ("correlate", &["--estimates"]),
    ];
    for (sub, extra) in subcommands {
        let mut runs = Vec::new();
        for threads in ["1", "1", "4", "4"] {
            let _ = std::fs::remove_dir_all(&out);
            let mut cmd = Command::new(bin);
            cmd.arg("--threads").arg(threads).arg(sub).args(&common).args(extra);
            if sub == "correlate" {
                cmd.arg(reference.join("estimates.csv"));
            }
            let o = cmd.output().unwrap();
            if !o.status.success() {
                failures.push(format!("{sub}@{threads}: {}", String::from_utf8_lossy(&o.stderr).trim()));
                break;
            }
            let mut files = snapshot(&out);
            files.insert("<stdout>".into(), o.stdout);
            runs.push(files);
        }
        if sub == "estimate" {
            std::fs::create_dir_all(&reference).unwrap();
            std::fs::copy(out.join("estimates.csv"), reference.join("estimates.csv")).unwrap();
        }
        if runs.windows(2).any(|w| w[0] != w[1]) {
            differing.push(sub);
        }
    }
    verdict(
        "10",
        failures.is_empty() && differing.is_empty(),
        format!(
            "6 subcommands × 2 runs at 1 thread and 2 at 4 threads; differing outputs: {differing:?}; failed runs: {failures:?}"
        ),
    )
}

fn main() {
    let criteria: [fn() -> Vec<Verdict>; 10] = [
        || vec![criterion_1()],
        || vec![criterion_2()],
        || vec![criterion_3()],
        || vec![criterion_4()],
        || vec![criterion_5()],
        || vec![criterion_6()],
        || vec![criterion_7()],
        || vec![criterion_8()],
        criterion_9,
        || vec![criterion_10()],
    ];
    // e.g. ACCEPTANCE_ONLY=3,4 to run a subset
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    let mut counts = [0usize; 3];
    for (i, c) in criteria.into_iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        for v in c() {
            print_verdict(&v);
            counts[v.status as usize] += 1;
            if v.status == Status::Fail {
                failed.push(v.id);
            }
        }
    }
    println!("acceptance: {} passed, {} failed, {} not run", counts[0], counts[1], counts[2]);
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn print_verdict(v: &Verdict) {
    let s = match v.status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::NotRun => "NOT RUN",
    };
    println!("{s} [{}] {}", v.id, v.detail);
    let _ = std::io::Write::flush(&mut std::io::stdout());
}
