use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::rescale::weighted_mean;
use crate::error::{Error, Result};
use crate::features::LagProvenance;
use crate::ingest::{assign_flows, Biographies, Flow, LocationLevel, LocationTable};

pub const ESTIMATES_HEADER: [&str; 9] = [
    "location_id",
    "year",
    "gdp_pc_2011usd",
    "ci_low",
    "ci_high",
    "kind",
    "gated",
    "rescaled",
    "init_gdp_provenance",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Source,
    Estimate,
}

/// One row of `estimates.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub location_id: String,
    pub year: i32,
    pub gdp_pc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub kind: RecordKind,
    /// Whether the location-year fails the gating rule. Always false for
    /// estimates; informational for source rows.
    pub gated: bool,
    pub rescaled: bool,
    pub init_gdp_provenance: LagProvenance,
}

/// `printf("%.6g")`.
pub fn format_g6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{v:.*}", (5 - exp) as usize))
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn parse_provenance(s: &str) -> Option<LagProvenance> {
    [
        LagProvenance::Source,
        LagProvenance::Model,
        LagProvenance::CountrySource,
        LagProvenance::CountryModel,
        LagProvenance::SupraMean,
        LagProvenance::None,
    ]
    .into_iter()
    .find(|p| p.as_str() == s)
}

/// Writes records sorted by `(location_id, year)`.
pub fn write_estimates(path: &Path, records: &[EstimateRecord]) -> Result<()> {
    let mut sorted: Vec<&EstimateRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.location_id, a.year).cmp(&(&b.location_id, b.year)));
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record(ESTIMATES_HEADER).map_err(|e| Error::io(path, e.into()))?;
    for r in sorted {
        w.write_record([
            r.location_id.clone(),
            r.year.to_string(),
            format_g6(r.gdp_pc),
            format_g6(r.ci_low),
            format_g6(r.ci_high),
            match r.kind {
                RecordKind::Source => "source".into(),
                RecordKind::Estimate => "estimate".into(),
            },
            r.gated.to_string(),
            r.rescaled.to_string(),
            r.init_gdp_provenance.as_str().into(),
        ])
        .map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_estimates(path: &Path) -> Result<Vec<EstimateRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::io(path, e.into()))?
        .iter()
        .map(String::from)
        .collect();
    if header != ESTIMATES_HEADER {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::io(path, e.into()))?;
        let bad = |what: &str| Error::Parse {
            path: path.into(),
            line,
            message: format!("bad {what}"),
        };
        let num = |k: usize, what: &str| rec[k].parse::<f64>().map_err(|_| bad(what));
        out.push(EstimateRecord {
            location_id: rec[0].to_string(),
            year: rec[1].parse().map_err(|_| bad("year"))?,
            gdp_pc: num(2, "gdp")?,
            ci_low: num(3, "ci_low")?,
            ci_high: num(4, "ci_high")?,
            kind: match &rec[5] {
                "source" => RecordKind::Source,
                "estimate" => RecordKind::Estimate,
                _ => return Err(bad("kind")),
            },
            gated: parse_bool(&rec[6]).ok_or_else(|| bad("gated"))?,
            rescaled: parse_bool(&rec[7]).ok_or_else(|| bad("rescaled"))?,
            init_gdp_provenance: parse_provenance(&rec[8]).ok_or_else(|| bad("provenance"))?,
        });
    }
    Ok(out)
}

/// Unweighted births + deaths per `(location, year)`, recomputed from the
/// biographies.
pub fn population_proxies(
    bios: &Biographies,
    locations: &LocationTable,
    years: &[i32],
    window_years: i32,
) -> BTreeMap<(String, i32), f64> {
    let mut out = BTreeMap::new();
    for &y in years {
        let flows = assign_flows(bios, locations, y, window_years);
        for l in locations.iter() {
            let w = flows.count(&l.id, Flow::Births) + flows.count(&l.id, Flow::Deaths);
            out.insert((l.id.clone(), y), w as f64);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct RescaleAudit {
    /// Country-years with at least one rescaled region.
    pub checked: usize,
    pub max_relative_error: f64,
    pub violations: Vec<(String, i32, f64)>,
}

/// Checks that the proxy-weighted mean of every country's rescaled regions
/// equals the country's own value in `records`.
pub fn audit_rescaling(
    records: &[EstimateRecord],
    proxies: &BTreeMap<(String, i32), f64>,
    locations: &LocationTable,
    tolerance: f64,
) -> Result<RescaleAudit> {
    let value: BTreeMap<(&str, i32), f64> = records
        .iter()
        .map(|r| ((r.location_id.as_str(), r.year), r.gdp_pc))
        .collect();
    let mut groups: BTreeMap<(String, i32), Vec<&EstimateRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.rescaled) {
        let loc = locations
            .get(&r.location_id)
            .ok_or_else(|| Error::validation(format!("unknown location {}", r.location_id)))?;
        let country = match (loc.level, loc.parent_country.as_deref()) {
            (LocationLevel::Region, Some(c)) => c,
            _ => return Err(Error::validation(format!("{} is flagged rescaled but is not a region", r.location_id))),
        };
        groups.entry((country.to_string(), r.year)).or_default().push(r);
    }
    let mut audit = RescaleAudit {
        checked: 0,
        max_relative_error: 0.0,
        violations: Vec::new(),
    };
    for ((country, year), regions) in groups {
        let target = *value.get(&(country.as_str(), year)).ok_or_else(|| {
            Error::validation(format!("rescaled regions of {country} in {year} but no country value"))
        })?;
        let vals: Vec<f64> = regions.iter().map(|r| r.gdp_pc).collect();
        let w = regions
            .iter()
            .map(|r| {
                proxies
                    .get(&(r.location_id.clone(), year))
                    .copied()
                    .ok_or_else(|| Error::validation(format!("no proxy for {} in {year}", r.location_id)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let rel = (weighted_mean(&vals, &w) - target).abs() / target;
        audit.checked += 1;
        audit.max_relative_error = audit.max_relative_error.max(rel);
        if rel > tolerance {
            audit.violations.push((country, year, rel));
        }
    }
    Ok(audit)
}
