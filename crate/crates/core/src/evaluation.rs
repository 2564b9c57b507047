//! Country-held-out model comparison and external proxy correlations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::features::RowKey;
use crate::ingest::{Dataset, GdpTable, LocationTable};
use crate::numerics::{kruskal_wallis, mae_relative, pearson, quantile, r2_log};
use crate::pipeline::{
    run_chain, write_json, ChainOptions, ChainOutput, EstimateRecord, FeatureCache, ModelKind, Outcome, PeriodGrid,
    RecordKind,
};
use crate::seed::{child_seed, rng_from};

pub const MIN_SPLIT_COUNTRIES: usize = 5;
pub const MIN_USABLE_TEST_ROWS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub test_countries: BTreeSet<String>,
    /// Test countries and all of their regions.
    pub test_locations: BTreeSet<String>,
}

impl SplitSpec {
    pub fn is_test(&self, location_id: &str) -> bool {
        self.test_locations.contains(location_id)
    }
}

/// Draws `⌈fraction·n⌉` countries without replacement.
pub fn split_countries(locations: &LocationTable, fraction: f64, seed: u64) -> Result<SplitSpec> {
    let countries = locations.countries();
    if countries.len() < MIN_SPLIT_COUNTRIES {
        return Err(Error::validation(format!(
            "a country split needs at least {MIN_SPLIT_COUNTRIES} countries, found {}",
            countries.len()
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::validation("test fraction must lie in (0, 1)"));
    }
    let k = (fraction * countries.len() as f64).ceil() as usize;
    let mut rng = rng_from(seed);
    let test_countries: BTreeSet<String> = sample(&mut rng, countries.len(), k)
        .into_iter()
        .map(|i| countries[i].clone())
        .collect();
    let mut test_locations = test_countries.clone();
    for c in &test_countries {
        test_locations.extend(locations.regions_of(c));
    }
    Ok(SplitSpec {
        seed,
        test_countries,
        test_locations,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModelScores {
    pub r2: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodScores {
    pub period: String,
    pub n: usize,
    /// `None` when the period has fewer than two rows or no variance.
    pub r2_baseline: Option<f64>,
    pub r2_full: Option<f64>,
    pub mae_baseline: Option<f64>,
    pub mae_full: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitResult {
    pub split: usize,
    pub seed: u64,
    pub test_countries: Vec<String>,
    pub n_test_rows: usize,
    pub n_used: usize,
    pub n_gated: usize,
    /// Test rows in years or periods the chain does not cover.
    pub n_unpredicted: usize,
    pub baseline: Option<ModelScores>,
    pub full: Option<ModelScores>,
    pub per_period: Vec<PeriodScores>,
    pub failure: Option<String>,
}

impl SplitResult {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricSummary {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

fn summarize(values: &[f64]) -> Result<MetricSummary> {
    Ok(MetricSummary {
        median: quantile(values, 0.5)?,
        q25: quantile(values, 0.25)?,
        q75: quantile(values, 0.75)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct KwTest {
    pub h: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationSummary {
    pub n_splits: usize,
    pub n_completed: usize,
    pub n_failed: usize,
    pub r2_baseline: Option<MetricSummary>,
    pub r2_full: Option<MetricSummary>,
    pub mae_baseline: Option<MetricSummary>,
    pub mae_full: Option<MetricSummary>,
    pub kw_r2: Option<KwTest>,
    pub kw_mae: Option<KwTest>,
    pub failures: Vec<(usize, String)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerformanceDistribution {
    pub splits: Vec<SplitResult>,
    pub summary: EvaluationSummary,
}

impl PerformanceDistribution {
    fn completed(&self) -> impl Iterator<Item = (&ModelScores, &ModelScores)> {
        self.splits.iter().filter_map(|s| Some((s.baseline.as_ref()?, s.full.as_ref()?)))
    }

    pub fn r2(&self) -> (Vec<f64>, Vec<f64>) {
        self.completed().map(|(b, f)| (b.r2, f.r2)).unzip()
    }

    pub fn mae(&self) -> (Vec<f64>, Vec<f64>) {
        self.completed().map(|(b, f)| (b.mae, f.mae)).unzip()
    }
}

fn score(pred_log: &[f64], obs_log: &[f64]) -> Option<ModelScores> {
    let level = |v: &[f64]| v.iter().map(|x| 10f64.powf(*x)).collect::<Vec<_>>();
    Some(ModelScores {
        r2: r2_log(pred_log, obs_log).ok()?,
        mae: mae_relative(&level(pred_log), &level(obs_log)).ok()?,
    })
}

/// The source table without the held-out locations.
pub fn training_source(gdp: &GdpTable, split: &SplitSpec) -> GdpTable {
    gdp.filtered(|o| !split.is_test(&o.location_id))
}

fn check_no_leakage(chain: &ChainOutput, split: &SplitSpec) -> Result<()> {
    for m in &chain.models {
        if let Some(k) = m.training_keys.iter().find(|k| split.is_test(&k.location_id)) {
            return Err(Error::validation(format!(
                "held-out row {} {} reached the {} training set",
                k.location_id, k.year, m.period
            )));
        }
    }
    Ok(())
}

/// One split: hold out the countries, run the baseline and the full chain
/// on the remaining source rows and score both on the held-out rows.
pub fn evaluate_split(
    data: &Dataset,
    cache: &FeatureCache,
    grid: &PeriodGrid,
    config: &RunConfig,
    split_index: usize,
    master_seed: u64,
) -> Result<SplitResult> {
    let seed = child_seed(master_seed, "split", split_index as u64);
    let split = split_countries(&data.locations, config.test_fraction, seed)?;
    let mut result = SplitResult {
        split: split_index,
        seed,
        test_countries: split.test_countries.iter().cloned().collect(),
        n_test_rows: 0,
        n_used: 0,
        n_gated: 0,
        n_unpredicted: 0,
        baseline: None,
        full: None,
        per_period: Vec::new(),
        failure: None,
    };
    let test_rows: Vec<(RowKey, f64)> = data
        .gdp
        .iter()
        .filter(|o| split.is_test(&o.location_id))
        .map(|o| (RowKey::new(o.location_id.clone(), o.year), o.gdp_pc.log10()))
        .collect();
    result.n_test_rows = test_rows.len();

    let source = training_source(&data.gdp, &split);
    let chain_seed = child_seed(seed, "chain", 0);
    let run = |kind, rescale| {
        run_chain(
            cache,
            &data.locations,
            grid,
            &source,
            config,
            ChainOptions {
                kind,
                bootstrap: false,
                rescale,
                seed: chain_seed,
            },
        )
    };
    let chains = run(ModelKind::Full, true).and_then(|full| Ok((full, run(ModelKind::Baseline, false)?)));
    let (full, baseline) = match chains {
        Ok(c) => c,
        Err(e) => {
            result.failure = Some(e.to_string());
            return Ok(result);
        }
    };
    check_no_leakage(&full, &split)?;
    check_no_leakage(&baseline, &split)?;

    let mut by_period: BTreeMap<usize, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for (key, obs) in &test_rows {
        let (Some(f), Some(b)) = (full.rows.get(key), baseline.rows.get(key)) else {
            result.n_unpredicted += 1;
            continue;
        };
        if f.outcome == Outcome::Gated || b.outcome == Outcome::Gated {
            result.n_gated += 1;
            continue;
        }
        let (Some(fl), Some(bl)) = (f.level, b.level) else {
            result.n_unpredicted += 1;
            continue;
        };
        let p = grid
            .period_of(key.year)
            .and_then(|p| grid.position(p.id))
            .expect("row year on the grid");
        by_period.entry(p).or_default().push((*obs, bl.log10(), fl.log10()));
    }
    let all: Vec<(f64, f64, f64)> = by_period.values().flatten().copied().collect();
    result.n_used = all.len();
    if all.len() < MIN_USABLE_TEST_ROWS {
        result.failure = Some(format!(
            "only {} usable test rows (need {MIN_USABLE_TEST_ROWS})",
            all.len()
        ));
        return Ok(result);
    }
    let cols = |rows: &[(f64, f64, f64)]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let obs = rows.iter().map(|r| r.0).collect();
        let b = rows.iter().map(|r| r.1).collect();
        let f = rows.iter().map(|r| r.2).collect();
        (obs, b, f)
    };
    let (obs, b, f) = cols(&all);
    result.baseline = score(&b, &obs);
    result.full = score(&f, &obs);
    if result.baseline.is_none() || result.full.is_none() {
        result.failure = Some("held-out observations have no variance".into());
    }
    for (p, rows) in &by_period {
        let (obs, b, f) = cols(rows);
        let (sb, sf) = (score(&b, &obs), score(&f, &obs));
        result.per_period.push(PeriodScores {
            period: grid.periods()[*p].id.to_string(),
            n: rows.len(),
            r2_baseline: sb.map(|s| s.r2),
            r2_full: sf.map(|s| s.r2),
            mae_baseline: sb.map(|s| s.mae),
            mae_full: sf.map(|s| s.mae),
        });
    }
    Ok(result)
}

/// Repeated country-held-out evaluation of the full model against the
/// region-effects-plus-lag baseline.
pub fn evaluate_models(
    data: &Dataset,
    cache: &FeatureCache,
    grid: &PeriodGrid,
    config: &RunConfig,
    n_splits: usize,
    master_seed: u64,
) -> Result<PerformanceDistribution> {
    if n_splits == 0 {
        return Err(Error::validation("n_splits must be positive"));
    }
    let splits: Vec<SplitResult> = (0..n_splits)
        .into_par_iter()
        .map(|s| evaluate_split(data, cache, grid, config, s, master_seed))
        .collect::<Result<_>>()?;
    let mut dist = PerformanceDistribution {
        summary: EvaluationSummary {
            n_splits,
            n_completed: splits.iter().filter(|s| s.completed()).count(),
            n_failed: splits.iter().filter(|s| !s.completed()).count(),
            r2_baseline: None,
            r2_full: None,
            mae_baseline: None,
            mae_full: None,
            kw_r2: None,
            kw_mae: None,
            failures: splits
                .iter()
                .filter_map(|s| s.failure.clone().map(|f| (s.split, f)))
                .collect(),
        },
        splits,
    };
    let (r2b, r2f) = dist.r2();
    let (maeb, maef) = dist.mae();
    if !r2b.is_empty() {
        let kw = |b: &[f64], f: &[f64]| kruskal_wallis(&[b, f]).map(|(h, p)| KwTest { h, p });
        dist.summary.r2_baseline = Some(summarize(&r2b)?);
        dist.summary.r2_full = Some(summarize(&r2f)?);
        dist.summary.mae_baseline = Some(summarize(&maeb)?);
        dist.summary.mae_full = Some(summarize(&maef)?);
        dist.summary.kw_r2 = Some(kw(&r2b, &r2f)?);
        dist.summary.kw_mae = Some(kw(&maeb, &maef)?);
    }
    Ok(dist)
}

pub const EVALUATION_HEADER: [&str; 13] = [
    "split",
    "seed",
    "status",
    "test_countries",
    "n_test_rows",
    "n_used",
    "n_gated",
    "n_unpredicted",
    "r2_baseline",
    "r2_full",
    "mae_baseline",
    "mae_full",
    "failure",
];

/// `evaluation.csv` and `evaluation_summary.json`.
pub fn write_evaluation(dir: &Path, dist: &PerformanceDistribution) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("evaluation.csv");
    let err = |e: csv::Error| Error::io(&path, e.into());
    let mut w = csv::Writer::from_path(&path).map_err(err)?;
    w.write_record(EVALUATION_HEADER).map_err(err)?;
    let num = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for s in &dist.splits {
        w.write_record([
            s.split.to_string(),
            s.seed.to_string(),
            if s.completed() { "ok".into() } else { "failed".into() },
            s.test_countries.join(";"),
            s.n_test_rows.to_string(),
            s.n_used.to_string(),
            s.n_gated.to_string(),
            s.n_unpredicted.to_string(),
            num(s.baseline.map(|m| m.r2)),
            num(s.full.map(|m| m.r2)),
            num(s.baseline.map(|m| m.mae)),
            num(s.full.map(|m| m.mae)),
            s.failure.clone().unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(&dir.join("evaluation_summary.json"), &dist.summary)
}

// --- proxies ----------------------------------------------------------------

pub const PROXY_HEADER: [&str; 3] = ["location_id", "year", "value"];

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyObservation {
    pub location_id: String,
    pub year: i32,
    pub value: f64,
}

pub fn load_proxies(path: &Path) -> Result<Vec<ProxyObservation>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::io(path, e.into()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header != PROXY_HEADER {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            message: format!("expected header {PROXY_HEADER:?}, found {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::io(path, e.into()))?;
        let bad = |what: &str| Error::Parse {
            path: path.into(),
            line: i as u64 + 2,
            message: format!("bad {what}"),
        };
        let value: f64 = rec[2].trim().parse().map_err(|_| bad("value"))?;
        if !value.is_finite() {
            return Err(bad("value"));
        }
        out.push(ProxyObservation {
            location_id: rec[0].trim().to_string(),
            year: rec[1].trim().parse().map_err(|_| bad("year"))?,
            value,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyTransform {
    None,
    Log10,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProxyCorrelation {
    pub r: f64,
    pub n: usize,
    /// Separate correlations for source and estimate rows; `None` with
    /// fewer than three matches or no variance.
    pub r_source: Option<f64>,
    pub n_source: usize,
    pub r_estimate: Option<f64>,
    pub n_estimate: usize,
}

/// Pearson correlation of (transformed) estimates with an external proxy,
/// inner-joined on `(location_id, year)`.
pub fn proxy_correlation(
    estimates: &[EstimateRecord],
    proxies: &[ProxyObservation],
    transform: ProxyTransform,
) -> Result<ProxyCorrelation> {
    let proxy: BTreeMap<(&str, i32), f64> = proxies.iter().map(|p| ((p.location_id.as_str(), p.year), p.value)).collect();
    let mut pairs: Vec<(f64, f64, RecordKind)> = Vec::new();
    for e in estimates {
        if let Some(&v) = proxy.get(&(e.location_id.as_str(), e.year)) {
            let x = match transform {
                ProxyTransform::None => e.gdp_pc,
                ProxyTransform::Log10 => e.gdp_pc.log10(),
            };
            pairs.push((x, v, e.kind));
        }
    }
    if pairs.len() < 3 {
        return Err(Error::validation(format!(
            "proxy correlation needs at least 3 matched location-years, found {}",
            pairs.len()
        )));
    }
    let corr = |kind: Option<RecordKind>| -> (f64, usize) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs
            .iter()
            .filter(|p| kind.is_none_or(|k| p.2 == k))
            .map(|p| (p.0, p.1))
            .unzip();
        if x.len() < 3 {
            return (f64::NAN, x.len());
        }
        (pearson(&x, &y), x.len())
    };
    let (r, n) = corr(None);
    if r.is_nan() {
        return Err(Error::validation("proxy correlation undefined: a series has no variance"));
    }
    let finite = |v: f64| v.is_finite().then_some(v);
    let (rs, ns) = corr(Some(RecordKind::Source));
    let (re, ne) = corr(Some(RecordKind::Estimate));
    Ok(ProxyCorrelation {
        r,
        n,
        r_source: finite(rs),
        n_source: ns,
        r_estimate: finite(re),
        n_estimate: ne,
    })
}
