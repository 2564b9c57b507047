use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::baseline::{fit_baseline, BaselineModel, BaselineRow};
use super::bootstrap::{bootstrap_ci, BootstrapSpec};
use super::gating::GatingPolicy;
use super::periods::{Period, PeriodGrid};
use super::records::{write_estimates, EstimateRecord, RecordKind};
use super::rescale::rescale_regions;
use crate::config::{CvSelectionRule, RunConfig};
use crate::elasticnet::{en_cv, en_predict, CvResult, EnModel, PreparedDesign};
use crate::error::{Error, Result};
use crate::features::{
    base_features_from_flows, hpi_weights, with_initial_gdp, window_is_empty, EstimateLookup, FeatureMatrix,
    FeatureParams, LagProvenance, RowKey, YearFeatures, INIT_GDP,
};
use crate::ingest::{assign_flows, Biographies, Dataset, GdpTable, LocationLevel, LocationTable};
use crate::seed::child_seed;

/// Biography-derived features for every snapshot year with at least one
/// individual. They do not depend on GDP labels, so one cache serves every
/// run over the same biographies.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    pub years: BTreeMap<i32, YearFeatures>,
    pub skipped_years: Vec<i32>,
    pub occupations: Vec<String>,
    pub hpi_clamped: usize,
}

impl FeatureCache {
    pub fn build(bios: &Biographies, locations: &LocationTable, grid: &PeriodGrid, config: &RunConfig) -> Result<Self> {
        let (weights, hpi_clamped) = hpi_weights(bios, config.reference_year_for_age);
        let occupations = bios.occupations();
        let params = FeatureParams {
            window_years: config.window_years,
            scale: config.scale,
            n_factors: config.n_factors,
            age_mode: config.age_mode,
        };
        let built: Vec<(i32, Option<YearFeatures>)> = grid
            .snapshot_years()
            .into_par_iter()
            .map(|y| {
                let flows = assign_flows(bios, locations, y, config.window_years);
                if window_is_empty(&flows) {
                    return Ok((y, None));
                }
                base_features_from_flows(&flows, bios, &weights, locations, &occupations, &params).map(|f| (y, Some(f)))
            })
            .collect::<Result<_>>()?;
        let mut years = BTreeMap::new();
        let mut skipped_years = Vec::new();
        for (y, f) in built {
            match f {
                Some(f) => {
                    years.insert(y, f);
                }
                None => skipped_years.push(y),
            }
        }
        if years.is_empty() {
            return Err(Error::validation("no snapshot year has any individual in its window"));
        }
        Ok(Self {
            years,
            skipped_years,
            occupations,
            hpi_clamped,
        })
    }

    /// Imputation and degeneracy counts summed over years.
    pub fn flag_totals(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for f in self.years.values() {
            for (k, v) in &f.flags {
                *out.entry(k.clone()).or_default() += v;
            }
        }
        out
    }
}

/// All candidate rows of one period with their lag, label and gate inputs.
#[derive(Debug, Clone)]
pub struct PeriodDesign {
    pub period: Period,
    pub matrix: FeatureMatrix,
    pub provenance: Vec<LagProvenance>,
    /// log10 source GDP where available.
    pub labels: Vec<Option<f64>>,
    pub births: Vec<u32>,
    pub deaths: Vec<u32>,
}

impl PeriodDesign {
    /// `None` when no snapshot year of the period has features.
    pub fn build(
        cache: &FeatureCache,
        period: &Period,
        locations: &LocationTable,
        source: &GdpTable,
        estimates: &EstimateLookup,
    ) -> Result<Option<Self>> {
        let mut parts = Vec::new();
        let mut provenance = Vec::new();
        let mut births = Vec::new();
        let mut deaths = Vec::new();
        for y in &period.snapshots {
            let Some(yf) = cache.years.get(y) else { continue };
            match period.prev_end {
                Some(prev) => {
                    let (m, p) = with_initial_gdp(&yf.matrix, prev, source, estimates, locations)?;
                    parts.push(m);
                    provenance.extend(p);
                }
                None => {
                    parts.push(yf.matrix.clone());
                    provenance.extend(std::iter::repeat_n(LagProvenance::None, yf.matrix.n_rows()));
                }
            }
            for k in &yf.matrix.keys {
                births.push(yf.births[&k.location_id]);
                deaths.push(yf.deaths[&k.location_id]);
            }
        }
        if parts.is_empty() {
            return Ok(None);
        }
        let mut matrix = FeatureMatrix::vstack(&parts)?;
        matrix.period = Some(period.id.to_string());
        let labels = matrix
            .keys
            .iter()
            .map(|k| source.get(&k.location_id, k.year).map(|o| o.gdp_pc.log10()))
            .collect();
        Ok(Some(Self {
            period: period.clone(),
            matrix,
            provenance,
            labels,
            births,
            deaths,
        }))
    }

    pub fn labeled_rows(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i].is_some()).collect()
    }

    /// Labeled rows and their log10 GDP.
    pub fn training(&self) -> (FeatureMatrix, Vec<f64>) {
        let idx = self.labeled_rows();
        let y = idx.iter().map(|&i| self.labels[i].expect("labeled")).collect();
        (self.matrix.select_rows(&idx), y)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CvSummary {
    pub alpha: f64,
    pub lambda: f64,
    pub min_mean_mse: f64,
    pub n_cells: usize,
    pub k: usize,
    pub rule: CvSelectionRule,
    pub fold_optima: Vec<(f64, f64)>,
}

impl CvSummary {
    fn from_result(r: &CvResult) -> Self {
        Self {
            alpha: r.alpha,
            lambda: r.lambda,
            min_mean_mse: r.cells.iter().map(|c| c.mean_mse).fold(f64::INFINITY, f64::min),
            n_cells: r.cells.len(),
            k: r.k,
            rule: r.rule,
            fold_optima: r.fold_optima.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPeriodModel {
    pub period: String,
    pub model: EnModel,
    pub feature_names: Vec<String>,
    pub training_keys: Vec<RowKey>,
    pub cv: CvSummary,
    /// Training rows (raw scale) and their log10 GDP.
    pub training: FeatureMatrix,
    pub y: Vec<f64>,
}

/// Enforces that periods are trained oldest first.
#[derive(Debug, Clone)]
pub struct Chronology<'a> {
    grid: &'a PeriodGrid,
    last: Option<usize>,
}

impl<'a> Chronology<'a> {
    pub fn new(grid: &'a PeriodGrid) -> Self {
        Self { grid, last: None }
    }

    pub fn advance(&mut self, period_id: &str) -> Result<()> {
        let pos = self
            .grid
            .position(period_id)
            .ok_or_else(|| Error::validation(format!("unknown period {period_id}")))?;
        if self.last.is_some_and(|l| pos <= l) {
            return Err(Error::validation(format!(
                "period {period_id} trained out of chronological order"
            )));
        }
        self.last = Some(pos);
        Ok(())
    }
}

/// Cross-validates and fits the elastic net on the labeled rows of `design`.
pub fn train_period(design: &PeriodDesign, config: &RunConfig, seed: u64) -> Result<TrainedPeriodModel> {
    let (training, y) = design.training();
    if training.n_rows() < 2 * config.k_folds {
        return Err(Error::validation(format!(
            "period {} has {} labeled rows, fewer than 2·k = {}; reduce k_folds",
            design.period.id,
            training.n_rows(),
            2 * config.k_folds
        )));
    }
    let cv = en_cv(
        &training.values,
        &training.names,
        &y,
        &config.alpha_grid,
        config.n_lambda,
        config.lambda_ratio,
        config.k_folds,
        child_seed(seed, &format!("cv/{}", design.period.id), 0),
        config.cv_selection_rule,
    )?;
    let model = PreparedDesign::new(&training.values, &training.names, &y)?.fit(cv.alpha, cv.lambda)?;
    Ok(TrainedPeriodModel {
        period: design.period.id.to_string(),
        feature_names: training.names.clone(),
        training_keys: training.keys.clone(),
        cv: CvSummary::from_result(&cv),
        model,
        training,
        y,
    })
}

#[derive(Debug, Clone, Default)]
pub struct GatedPrediction {
    /// `(row, log10 prediction)` for unlabeled rows that pass the gate.
    pub predicted: Vec<(usize, f64)>,
    pub gated: Vec<usize>,
}

fn gate_split(design: &PeriodDesign, policy: &GatingPolicy) -> (Vec<usize>, Vec<usize>) {
    (0..design.labels.len())
        .filter(|&i| design.labels[i].is_none())
        .partition(|&i| policy.passes(design.matrix.keys[i].year, design.births[i], design.deaths[i]))
}

pub fn predict_gated(model: &TrainedPeriodModel, design: &PeriodDesign, policy: &GatingPolicy) -> Result<GatedPrediction> {
    let (pass, gated) = gate_split(design, policy);
    let sub = design.matrix.select_rows(&pass);
    let pred = en_predict(&model.model, &sub.values, &sub.names)?;
    Ok(GatedPrediction {
        predicted: pass.into_iter().zip(pred).collect(),
        gated,
    })
}

fn baseline_rows(design: &PeriodDesign, idx: &[usize], locations: &LocationTable) -> Result<Vec<BaselineRow>> {
    let lag_col = design.matrix.column_index(INIT_GDP);
    idx.iter()
        .map(|&i| {
            let k = &design.matrix.keys[i];
            Ok(BaselineRow {
                supranational: locations
                    .supranational_of(&k.location_id)
                    .ok_or_else(|| Error::validation(format!("no supranational region for {}", k.location_id)))?
                    .to_string(),
                year: k.year,
                lag: lag_col.map(|j| design.matrix.values[(i, j)]),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Full,
    Baseline,
}

#[derive(Debug, Clone, Copy)]
pub struct ChainOptions {
    pub kind: ModelKind,
    pub bootstrap: bool,
    pub rescale: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Labeled,
    Estimated,
    Gated,
}

#[derive(Debug, Clone, Serialize)]
pub struct RowResult {
    pub outcome: Outcome,
    /// Final level-scale value: source for labeled rows, the (rescaled)
    /// model estimate otherwise.
    pub level: Option<f64>,
    /// Raw model output before rescaling.
    pub log10_prediction: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub rescaled: bool,
    /// Region left unrescaled because its country has no value.
    pub unrescaled: bool,
    pub passes_gate: bool,
    pub provenance: LagProvenance,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PeriodReport {
    pub period: String,
    pub status: String,
    pub years: Vec<i32>,
    pub candidates: usize,
    pub labeled: usize,
    pub estimated: usize,
    pub gated: usize,
    pub rescaled: usize,
    pub unrescaled: usize,
    pub n_features: usize,
    pub n_selected: usize,
    pub cv: Option<CvSummary>,
    pub sweeps: Option<usize>,
    pub max_delta: Option<f64>,
    pub bootstrap_redrawn: usize,
    pub lag_provenance: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub rows: BTreeMap<RowKey, RowResult>,
    pub periods: Vec<PeriodReport>,
    pub models: Vec<TrainedPeriodModel>,
    pub baselines: Vec<(String, BaselineModel)>,
    pub estimates: EstimateLookup,
}

/// Chronological estimation over all periods with labels in `source`.
///
/// Periods without any labeled row are skipped (reported, nothing emitted).
pub fn run_chain(
    cache: &FeatureCache,
    locations: &LocationTable,
    grid: &PeriodGrid,
    source: &GdpTable,
    config: &RunConfig,
    options: ChainOptions,
) -> Result<ChainOutput> {
    let policy = GatingPolicy {
        rule: config.gating_rule,
        thresholds: config.gating_thresholds,
    };
    let mut chronology = Chronology::new(grid);
    let mut out = ChainOutput {
        rows: BTreeMap::new(),
        periods: Vec::new(),
        models: Vec::new(),
        baselines: Vec::new(),
        estimates: EstimateLookup::new(),
    };
    for period in grid.periods() {
        let mut report = PeriodReport {
            period: period.id.to_string(),
            ..Default::default()
        };
        // lags are only needed (and may only be fillable) where there is something to train on
        if !source.iter().any(|o| period.snapshots.contains(&o.year) && cache.years.contains_key(&o.year)) {
            report.status = "skipped: no labeled rows".into();
            out.periods.push(report);
            continue;
        }
        let Some(design) = PeriodDesign::build(cache, period, locations, source, &out.estimates)? else {
            report.status = "skipped: no snapshot year with individuals".into();
            out.periods.push(report);
            continue;
        };
        report.years = period.snapshots.iter().filter(|y| cache.years.contains_key(y)).copied().collect();
        report.candidates = design.matrix.n_rows();
        report.n_features = design.matrix.names.len();
        for p in &design.provenance {
            *report.lag_provenance.entry(p.as_str().to_string()).or_default() += 1;
        }
        let labeled = design.labeled_rows();
        report.labeled = labeled.len();
        if labeled.is_empty() {
            report.status = "skipped: no labeled rows".into();
            out.periods.push(report);
            continue;
        }
        chronology.advance(period.id)?;

        let (pred, trained) = match options.kind {
            ModelKind::Full => {
                let trained = train_period(&design, config, options.seed)?;
                report.n_selected = trained.model.selected_features.len();
                report.cv = Some(trained.cv.clone());
                report.sweeps = Some(trained.model.sweeps);
                report.max_delta = Some(trained.model.max_delta);
                (predict_gated(&trained, &design, &policy)?, Some(trained))
            }
            ModelKind::Baseline => {
                let rows = baseline_rows(&design, &labeled, locations)?;
                let y: Vec<f64> = labeled.iter().map(|&i| design.labels[i].expect("labeled")).collect();
                let model = fit_baseline(&rows, &y)?;
                let (pass, gated) = gate_split(&design, &policy);
                let predicted = baseline_rows(&design, &pass, locations)?
                    .iter()
                    .zip(&pass)
                    .map(|(r, &i)| model.predict(r).map(|v| (i, v)))
                    .collect::<Result<_>>()?;
                report.n_features = usize::from(period.prev_end.is_some());
                out.baselines.push((period.id.to_string(), model));
                (GatedPrediction { predicted, gated }, None)
            }
        };
        report.status = "trained".into();
        report.estimated = pred.predicted.len();
        report.gated = pred.gated.len();

        let mut level: BTreeMap<usize, f64> = pred.predicted.iter().map(|&(i, p)| (i, 10f64.powf(p))).collect();
        let mut ci: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        if let (true, Some(trained)) = (options.bootstrap, trained.as_ref()) {
            let idx: Vec<usize> = pred.predicted.iter().map(|p| p.0).collect();
            let targets = design.matrix.select_rows(&idx);
            let spec = BootstrapSpec {
                replicates: config.bootstrap_b,
                level: config.ci_level,
                unit: config.bootstrap_unit,
                locations,
                seed: child_seed(options.seed, &format!("bootstrap/{}", period.id), 0),
            };
            let b = bootstrap_ci(&trained.training, &trained.y, trained.model.alpha, trained.model.lambda, &targets, &spec)?;
            report.bootstrap_redrawn = b.redrawn;
            ci = idx.into_iter().zip(b.intervals).collect();
        }

        // rescale regional estimates to their country's value
        let mut rescaled = vec![false; design.matrix.n_rows()];
        let mut unrescaled = vec![false; design.matrix.n_rows()];
        if options.rescale {
            let row_of: BTreeMap<&RowKey, usize> = design.matrix.keys.iter().enumerate().map(|(i, k)| (k, i)).collect();
            let mut groups: BTreeMap<(String, i32), Vec<usize>> = BTreeMap::new();
            for &i in level.keys() {
                let k = &design.matrix.keys[i];
                let loc = locations.get(&k.location_id).expect("known location");
                if let (LocationLevel::Region, Some(c)) = (loc.level, loc.parent_country.as_ref()) {
                    groups.entry((c.clone(), k.year)).or_default().push(i);
                }
            }
            for ((country, year), regions) in groups {
                let country_value = source.get(&country, year).map(|o| o.gdp_pc).or_else(|| {
                    row_of
                        .get(&RowKey::new(country.clone(), year))
                        .and_then(|i| level.get(i).copied())
                });
                let Some(cv) = country_value else {
                    regions.iter().for_each(|&i| unrescaled[i] = true);
                    continue;
                };
                let est: Vec<f64> = regions.iter().map(|i| level[i]).collect();
                let w: Vec<f64> = regions.iter().map(|&i| f64::from(design.births[i] + design.deaths[i])).collect();
                let r = rescale_regions(&est, &w, cv)?;
                for (&i, v) in regions.iter().zip(r.values) {
                    level.insert(i, v);
                    rescaled[i] = true;
                    if let Some(c) = ci.get_mut(&i) {
                        *c = (c.0 * r.factor, c.1 * r.factor);
                    }
                }
            }
        }
        report.rescaled = rescaled.iter().filter(|r| **r).count();
        report.unrescaled = unrescaled.iter().filter(|r| **r).count();

        let log_pred: BTreeMap<usize, f64> = pred.predicted.iter().copied().collect();
        for (i, key) in design.matrix.keys.iter().enumerate() {
            let passes_gate = policy.passes(key.year, design.births[i], design.deaths[i]);
            let outcome = if design.labels[i].is_some() {
                Outcome::Labeled
            } else if level.contains_key(&i) {
                Outcome::Estimated
            } else {
                Outcome::Gated
            };
            let value = match outcome {
                Outcome::Labeled => design.labels[i].map(|l| 10f64.powf(l)),
                _ => level.get(&i).copied(),
            };
            if outcome == Outcome::Estimated {
                out.estimates.insert((key.location_id.clone(), key.year), value.expect("estimated"));
            }
            out.rows.insert(
                key.clone(),
                RowResult {
                    outcome,
                    level: value,
                    log10_prediction: log_pred.get(&i).copied(),
                    ci: ci.get(&i).copied(),
                    rescaled: rescaled[i],
                    unrescaled: unrescaled[i],
                    passes_gate,
                    provenance: design.provenance[i],
                },
            );
        }
        if let Some(t) = trained {
            out.models.push(t);
        }
        out.periods.push(report);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunCounts {
    pub source: usize,
    pub estimate: usize,
    pub gated: usize,
    pub rescaled: usize,
    pub unrescaled_no_country_value: usize,
    pub hpi_clamped: usize,
    pub biographies_eligible: usize,
    pub biography_rows: usize,
    pub rejected_rows: usize,
    pub feature_flags: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config: RunConfig,
    pub counts: RunCounts,
    pub rejects_by_reason: BTreeMap<String, usize>,
    pub skipped_years: Vec<i32>,
    pub periods: Vec<PeriodReport>,
    pub gated: Vec<RowKey>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FullRun {
    pub records: Vec<EstimateRecord>,
    pub report: RunReport,
    pub chain: ChainOutput,
}

/// Source pass-through plus gated, rescaled model estimates with bootstrap
/// intervals, sorted by `(location_id, year)`.
pub fn run_full(data: &Dataset, config: &RunConfig) -> Result<FullRun> {
    let grid = PeriodGrid::standard();
    let cache = FeatureCache::build(&data.biographies, &data.locations, &grid, config)?;
    run_full_with_cache(data, config, &grid, &cache, true)
}

pub fn run_full_with_cache(
    data: &Dataset,
    config: &RunConfig,
    grid: &PeriodGrid,
    cache: &FeatureCache,
    bootstrap: bool,
) -> Result<FullRun> {
    let chain = run_chain(
        cache,
        &data.locations,
        grid,
        &data.gdp,
        config,
        ChainOptions {
            kind: ModelKind::Full,
            bootstrap,
            rescale: true,
            seed: config.seed,
        },
    )?;
    let mut records = Vec::new();
    for o in data.gdp.iter() {
        let key = RowKey::new(o.location_id.clone(), o.year);
        let row = chain.rows.get(&key);
        records.push(EstimateRecord {
            location_id: o.location_id.clone(),
            year: o.year,
            gdp_pc: o.gdp_pc,
            ci_low: o.gdp_pc,
            ci_high: o.gdp_pc,
            kind: RecordKind::Source,
            gated: row.is_some_and(|r| !r.passes_gate),
            rescaled: false,
            init_gdp_provenance: row.map_or(LagProvenance::None, |r| r.provenance),
        });
    }
    let mut gated = Vec::new();
    for (key, r) in &chain.rows {
        match r.outcome {
            Outcome::Estimated => {
                let v = r.level.expect("estimated");
                let (lo, hi) = r.ci.unwrap_or((v, v));
                records.push(EstimateRecord {
                    location_id: key.location_id.clone(),
                    year: key.year,
                    gdp_pc: v,
                    ci_low: lo,
                    ci_high: hi,
                    kind: RecordKind::Estimate,
                    gated: false,
                    rescaled: r.rescaled,
                    init_gdp_provenance: r.provenance,
                });
            }
            Outcome::Gated => gated.push(key.clone()),
            Outcome::Labeled => {}
        }
    }
    records.sort_by(|a, b| (&a.location_id, a.year).cmp(&(&b.location_id, b.year)));

    let mut rejects_by_reason = BTreeMap::new();
    for r in &data.rejects {
        *rejects_by_reason.entry(r.reason.clone()).or_default() += 1;
    }
    let counts = RunCounts {
        source: records.iter().filter(|r| r.kind == RecordKind::Source).count(),
        estimate: records.iter().filter(|r| r.kind == RecordKind::Estimate).count(),
        gated: gated.len(),
        rescaled: chain.rows.values().filter(|r| r.rescaled).count(),
        unrescaled_no_country_value: chain.rows.values().filter(|r| r.unrescaled).count(),
        hpi_clamped: cache.hpi_clamped,
        biographies_eligible: data.biographies.len(),
        biography_rows: data.total_rows,
        rejected_rows: data.rejects.len(),
        feature_flags: cache.flag_totals(),
    };
    let report = RunReport {
        command: "estimate".into(),
        config: config.clone(),
        counts,
        rejects_by_reason,
        skipped_years: cache.skipped_years.clone(),
        periods: chain.periods.clone(),
        gated,
        warnings: data.warnings.clone(),
    };
    Ok(FullRun { records, report, chain })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::validation(format!("serialization: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// estimates.csv, run_report.json and one model JSON per trained period.
pub fn write_run_outputs(dir: &Path, run: &FullRun) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_estimates(&dir.join("estimates.csv"), &run.records)?;
    write_json(&dir.join("run_report.json"), &run.report)?;
    for m in &run.chain.models {
        let path = dir.join(format!("model_{}.json", m.period));
        std::fs::write(&path, m.model.to_json()? + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
