use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Output of [`standardize`]: kept columns rescaled to mean 0 / population sd 1.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub x: Matrix,
    /// Indices into the input columns that survived, in input order.
    pub kept: Vec<usize>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Labels (or `col<j>` when unlabeled) of the dropped constant columns.
    pub dropped: Vec<String>,
}

pub fn column_mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn is_constant(values: &[f64], sd: f64) -> bool {
    let max_abs = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    values.iter().all(|v| *v == values[0]) || sd <= 1e-12 * max_abs
}

/// Column standardization with population (ddof = 0) sd; constant columns are dropped.
pub fn standardize(x: &Matrix) -> Standardized {
    let mut kept = Vec::new();
    let mut means = Vec::new();
    let mut sds = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..x.cols() {
        let c = x.column(j);
        let (mean, sd) = if c.is_empty() { (0.0, 0.0) } else { column_mean_sd(&c) };
        if c.is_empty() || is_constant(&c, sd) {
            dropped.push(
                x.col_labels()
                    .map(|l| l[j].clone())
                    .unwrap_or_else(|| format!("col{j}")),
            );
        } else {
            kept.push(j);
            means.push(mean);
            sds.push(sd);
        }
    }
    let mut out = x.select_cols(&kept);
    for i in 0..out.rows() {
        for k in 0..kept.len() {
            out[(i, k)] = (out[(i, k)] - means[k]) / sds[k];
        }
    }
    Standardized {
        x: out,
        kept,
        means,
        sds,
        dropped,
    }
}

/// Linear-interpolation quantile on `p·(n−1)` of the sorted sample.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::validation("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("quantile probability {p} outside [0, 1]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("quantile of non-finite values"));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&s, p))
}

pub(crate) fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let h = p * (s.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

pub fn median(values: &[f64]) -> Result<f64> {
    quantile(values, 0.5)
}

/// Kruskal–Wallis H with mid-ranks and tie correction; p from χ²(groups − 1).
pub fn kruskal_wallis<G: AsRef<[f64]>>(groups: &[G]) -> Result<(f64, f64)> {
    if groups.len() < 2 {
        return Err(Error::validation("Kruskal-Wallis needs at least two groups"));
    }
    if groups.iter().any(|g| g.as_ref().is_empty()) {
        return Err(Error::validation("Kruskal-Wallis group is empty"));
    }
    let mut pooled: Vec<(f64, usize)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, v)| v.as_ref().iter().map(move |x| (*x, g)))
        .collect();
    if pooled.iter().any(|(x, _)| !x.is_finite()) {
        return Err(Error::validation("Kruskal-Wallis input is not finite"));
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pooled.len() as f64;

    let mut rank_sums = vec![0.0; groups.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        for item in &pooled[i..=j] {
            rank_sums[item.1] += mid_rank;
        }
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let correction = 1.0 - tie_term / (n * n * n - n);
    if correction <= 0.0 {
        return Ok((0.0, 1.0));
    }
    let s: f64 = rank_sums
        .iter()
        .zip(groups)
        .map(|(r, g)| r * r / g.as_ref().len() as f64)
        .sum();
    let h = ((12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0)) / correction).max(0.0);
    let p = chi_square_sf(h, (groups.len() - 1) as f64);
    Ok((h, p))
}

/// Out-of-sample R² on the log scale: `1 − SSE/SST`; may be negative.
pub fn r2_log(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    if predicted.len() != observed.len() {
        return Err(Error::validation("r2: length mismatch"));
    }
    if observed.len() < 2 {
        return Err(Error::validation("r2 needs at least two observations"));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let sst: f64 = observed.iter().map(|o| (o - mean).powi(2)).sum();
    if sst <= 0.0 {
        return Err(Error::validation("r2: observed values have zero variance"));
    }
    let sse: f64 = predicted.iter().zip(observed).map(|(p, o)| (o - p).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// Mean absolute error relative to the mean observed level.
pub fn mae_relative(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    if predicted.len() != observed.len() || observed.is_empty() {
        return Err(Error::validation("mae: length mismatch or empty input"));
    }
    if observed.iter().any(|o| !(*o > 0.0)) {
        return Err(Error::validation("mae: observed levels must be positive"));
    }
    let n = observed.len() as f64;
    let mae = predicted.iter().zip(observed).map(|(p, o)| (p - o).abs()).sum::<f64>() / n;
    Ok(mae / (observed.iter().sum::<f64>() / n))
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Mid-ranks (1-based) of a sample.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

// --- chi-square survival function -------------------------------------------

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..10_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    // modified Lentz
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// P(X > x) for X ~ χ²(df).
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    gamma_q(df / 2.0, x / 2.0)
}
