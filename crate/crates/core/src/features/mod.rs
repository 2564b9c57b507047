//! Candidate features per (location, snapshot year).
//!
//! Column naming:
//!
//! | column                 | meaning                                           |
//! |------------------------|---------------------------------------------------|
//! | `<flow>.total`         | linearized HPI-weighted count of the flow          |
//! | `<flow>.<occupation>`  | linearized HPI-weighted count per occupation       |
//! | `diversity.<flow>`     | occupations with at least one individual           |
//! | `ubiquity.<flow>`      | mean ubiquity of the occupations present           |
//! | `eci.<flow>`           | economic complexity index                          |
//! | `svd.<flow>.<i>`       | i-th left singular vector of `log10(1 + N)`        |
//! | `avg_age`              | mean age of the location's individuals             |
//! | `dummy.<region>`       | supranational region indicator (first one dropped) |
//! | `init_gdp`             | log10 GDP at the end of the previous period        |
//!
//! Counts, ECI, SVD factors and ubiquity are computed separately for the
//! country level and the region level.

mod complexity;
mod counts;
mod hpi;
mod lag;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

pub use complexity::{eci, eci_direct, eci_for_flow, rca_from_weights, rca_matrix, svd_factors, EciResult, RcaResult};
pub use counts::{avg_age, avg_ubiquity, diversity, flow_counts, CountTensor};
pub use hpi::{hpi, hpi_weights, linearize, HpiScore};
pub use lag::{initial_gdp, EstimateLookup, LagProvenance};

use crate::config::{AgeMode, Scale};
use crate::error::{Error, Result};
use crate::ingest::{assign_flows, Biographies, Flow, FlowAssignment, GdpTable, LocationLevel, LocationTable};
use crate::numerics::Matrix;

pub const INIT_GDP: &str = "init_gdp";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RowKey {
    pub location_id: String,
    pub year: i32,
}

impl RowKey {
    pub fn new(location_id: impl Into<String>, year: i32) -> Self {
        Self {
            location_id: location_id.into(),
            year,
        }
    }
}

/// Named feature columns for a set of (location, year) rows.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub keys: Vec<RowKey>,
    pub names: Vec<String>,
    pub values: Matrix,
    pub scale: Scale,
    pub period: Option<String>,
}

impl FeatureMatrix {
    pub fn new(keys: Vec<RowKey>, names: Vec<String>, values: Matrix, scale: Scale) -> Result<Self> {
        if values.rows() != keys.len() || values.cols() != names.len() {
            return Err(Error::validation("feature matrix shape does not match keys/names"));
        }
        let unique_names: BTreeSet<&String> = names.iter().collect();
        if unique_names.len() != names.len() {
            return Err(Error::validation("duplicate feature names"));
        }
        let unique_keys: BTreeSet<&RowKey> = keys.iter().collect();
        if unique_keys.len() != keys.len() {
            return Err(Error::validation("duplicate feature row keys"));
        }
        Ok(Self {
            keys,
            names,
            values,
            scale,
            period: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn row_index(&self, key: &RowKey) -> Option<usize> {
        self.keys.iter().position(|k| k == key)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.column_index(name).map(|j| self.values.column(j))
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            keys: idx.iter().map(|&i| self.keys[i].clone()).collect(),
            names: self.names.clone(),
            values: self.values.select_rows(idx),
            scale: self.scale,
            period: self.period.clone(),
        }
    }

    /// Appends a column.
    pub fn with_column(mut self, name: &str, column: &[f64]) -> Result<Self> {
        if column.len() != self.n_rows() {
            return Err(Error::validation(format!("column {name} has the wrong length")));
        }
        if self.column_index(name).is_some() {
            return Err(Error::validation(format!("duplicate feature name {name}")));
        }
        let cols = self.names.len() + 1;
        let mut data = Vec::with_capacity(self.n_rows() * cols);
        for (i, v) in column.iter().enumerate() {
            data.extend_from_slice(self.values.row(i));
            data.push(*v);
        }
        self.values = Matrix::new(self.n_rows(), cols, data)?;
        self.names.push(name.to_string());
        Ok(self)
    }

    /// Row-wise concatenation of matrices with identical columns.
    pub fn vstack(parts: &[FeatureMatrix]) -> Result<FeatureMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::validation("nothing to stack"))?;
        let mut keys = Vec::new();
        let mut data = Vec::new();
        for p in parts {
            if p.names != first.names {
                return Err(Error::validation("stacked feature matrices differ in columns"));
            }
            keys.extend(p.keys.iter().cloned());
            data.extend_from_slice(p.values.values());
        }
        let values = Matrix::new(keys.len(), first.names.len(), data)?;
        let mut out = FeatureMatrix::new(keys, first.names.clone(), values, first.scale)?;
        out.period = first.period.clone();
        Ok(out)
    }

    /// `location_id,year,<features…>`; floats use the shortest representation
    /// that round-trips.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let mut header = vec!["location_id".to_string(), "year".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(|e| Error::io(path, e.into()))?;
        for (i, k) in self.keys.iter().enumerate() {
            let mut rec = vec![k.location_id.clone(), k.year.to_string()];
            rec.extend(self.row(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).map_err(|e| Error::io(path, e.into()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FeatureParams {
    pub window_years: i32,
    pub scale: Scale,
    pub n_factors: usize,
    pub age_mode: AgeMode,
}

/// Biography-derived features of one snapshot year, plus the unweighted
/// birth and death counts used for gating and rescaling.
#[derive(Debug, Clone)]
pub struct YearFeatures {
    pub year: i32,
    /// Every feature except `init_gdp`; one row per location.
    pub matrix: FeatureMatrix,
    pub births: BTreeMap<String, u32>,
    pub deaths: BTreeMap<String, u32>,
    /// Counts of imputation and degeneracy events.
    pub flags: BTreeMap<String, usize>,
}

/// Column names in assembly order (without `init_gdp`).
pub fn feature_names(occupations: &[String], supranational: &[String], n_factors: usize) -> Vec<String> {
    let mut names = Vec::new();
    for flow in Flow::ALL {
        names.push(format!("{}.total", flow.name()));
        for occ in occupations {
            names.push(format!("{}.{occ}", flow.name()));
        }
    }
    for prefix in ["diversity", "ubiquity", "eci"] {
        for flow in Flow::ALL {
            names.push(format!("{prefix}.{}", flow.name()));
        }
    }
    for flow in Flow::ALL {
        for f in 1..=n_factors {
            names.push(format!("svd.{}.{f}", flow.name()));
        }
    }
    names.push("avg_age".into());
    for region in supranational.iter().skip(1) {
        names.push(format!("dummy.{region}"));
    }
    names
}

/// Computes every biography-derived feature for `year`.
pub fn base_features(
    year: i32,
    bios: &Biographies,
    weights: &[f64],
    locations: &LocationTable,
    occupations: &[String],
    params: &FeatureParams,
) -> Result<YearFeatures> {
    let flows = assign_flows(bios, locations, year, params.window_years);
    if window_is_empty(&flows) {
        return Err(Error::validation(format!(
            "no individuals in the {}-year window before {year}",
            params.window_years
        )));
    }
    base_features_from_flows(&flows, bios, weights, locations, occupations, params)
}

/// True when nobody is born or dies at a known location in the window.
pub fn window_is_empty(flows: &FlowAssignment) -> bool {
    flows
        .by_location
        .values()
        .all(|s| s.births.is_empty() && s.deaths.is_empty())
}

/// [`base_features`] on a precomputed flow assignment.
pub fn base_features_from_flows(
    flows: &FlowAssignment,
    bios: &Biographies,
    weights: &[f64],
    locations: &LocationTable,
    occupations: &[String],
    params: &FeatureParams,
) -> Result<YearFeatures> {
    let year = flows.snapshot_year;
    let supra = locations.supranational_regions();
    let names = feature_names(occupations, &supra, params.n_factors);
    let mut flags: BTreeMap<String, usize> = BTreeMap::new();
    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut births = BTreeMap::new();
    let mut deaths = BTreeMap::new();

    for level in [LocationLevel::Country, LocationLevel::Region] {
        let ids = locations.ids_at(level);
        if ids.is_empty() {
            continue;
        }
        let t = flow_counts(flows, bios, weights, &ids, occupations)?;
        let n = ids.len();
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(names.len());
        for flow in Flow::ALL {
            cols.push(
                (0..n)
                    .map(|i| linearize(t.weighted_total(flow, i), params.scale))
                    .collect::<Result<_>>()?,
            );
            for k in 0..occupations.len() {
                cols.push(
                    (0..n)
                        .map(|i| linearize(t.weighted(flow, i, k), params.scale))
                        .collect::<Result<_>>()?,
                );
            }
        }
        for flow in Flow::ALL {
            cols.push(diversity(&t, flow).into_iter().map(|d| d as f64).collect());
        }
        for flow in Flow::ALL {
            let (u, empty) = avg_ubiquity(&t, flow);
            *flags.entry("empty_location".into()).or_default() += empty.iter().filter(|e| **e).count();
            cols.push(u);
        }
        for flow in Flow::ALL {
            let (e, degenerate, fell_back) = eci_for_flow(&t, flow)?;
            if degenerate {
                *flags.entry("degenerate_eci".into()).or_default() += 1;
            }
            if fell_back {
                *flags.entry("eci_direct_solve".into()).or_default() += 1;
            }
            cols.push(e);
        }
        for flow in Flow::ALL {
            let (factors, missing) = svd_factors(&t, flow, params.n_factors)?;
            *flags.entry("missing_svd_factor".into()).or_default() += missing;
            cols.extend(factors);
        }
        let (age, imputed) = avg_age(flows, bios, &ids, params.age_mode);
        *flags.entry("age_imputed".into()).or_default() += imputed.iter().filter(|e| **e).count();
        cols.push(age);
        for region in supra.iter().skip(1) {
            cols.push(
                ids.iter()
                    .map(|id| f64::from(locations.supranational_of(id) == Some(region.as_str())))
                    .collect(),
            );
        }
        debug_assert_eq!(cols.len(), names.len());
        for (i, id) in ids.iter().enumerate() {
            rows.insert(id.clone(), cols.iter().map(|c| c[i]).collect());
            births.insert(id.clone(), t.total(Flow::Births, i));
            deaths.insert(id.clone(), t.total(Flow::Deaths, i));
        }
    }

    let keys: Vec<RowKey> = rows.keys().map(|id| RowKey::new(id.clone(), year)).collect();
    let data: Vec<f64> = rows.into_values().flatten().collect();
    let values = Matrix::new(keys.len(), names.len(), data)?;
    Ok(YearFeatures {
        year,
        matrix: FeatureMatrix::new(keys, names, values, params.scale)?,
        births,
        deaths,
        flags,
    })
}

/// Appends the lagged-GDP column to a year's features. Returns the matrix
/// and the provenance of each row's lag.
pub fn with_initial_gdp(
    base: &FeatureMatrix,
    prev_end_year: i32,
    source: &GdpTable,
    estimates: &EstimateLookup,
    locations: &LocationTable,
) -> Result<(FeatureMatrix, Vec<LagProvenance>)> {
    let mut values = Vec::with_capacity(base.n_rows());
    let mut provenance = Vec::with_capacity(base.n_rows());
    for k in &base.keys {
        let (v, p) = initial_gdp(&k.location_id, prev_end_year, source, estimates, locations)?;
        values.push(v);
        provenance.push(p);
    }
    Ok((base.clone().with_column(INIT_GDP, &values)?, provenance))
}

/// Full feature matrix for one snapshot year. `prev_end_year` is `None` for
/// the earliest period, which has no lag column.
#[allow(clippy::too_many_arguments)]
pub fn build_feature_matrix(
    year: i32,
    prev_end_year: Option<i32>,
    bios: &Biographies,
    weights: &[f64],
    locations: &LocationTable,
    occupations: &[String],
    source: &GdpTable,
    estimates: &EstimateLookup,
    params: &FeatureParams,
) -> Result<FeatureMatrix> {
    let base = base_features(year, bios, weights, locations, occupations, params)?;
    match prev_end_year {
        None => Ok(base.matrix),
        Some(prev) => Ok(with_initial_gdp(&base.matrix, prev, source, estimates, locations)?.0),
    }
}
