use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{GdpTable, LocationLevel, LocationTable};

/// Where a lagged GDP value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LagProvenance {
    Source,
    Model,
    CountrySource,
    CountryModel,
    SupraMean,
    /// Earliest period: no lag is defined.
    None,
}

impl LagProvenance {
    pub fn as_str(self) -> &'static str {
        match self {
            LagProvenance::Source => "source",
            LagProvenance::Model => "model",
            LagProvenance::CountrySource => "country_source",
            LagProvenance::CountryModel => "country_model",
            LagProvenance::SupraMean => "supra_mean",
            LagProvenance::None => "none",
        }
    }
}

/// Model estimates (level scale) keyed by `(location_id, year)`.
pub type EstimateLookup = BTreeMap<(String, i32), f64>;

/// Lagged GDP (log10) for `location` at `prev_end_year`, taking the first
/// available of: own source, own model estimate, parent-country source,
/// parent-country estimate, mean source value of the supranational region.
pub fn initial_gdp(
    location: &str,
    prev_end_year: i32,
    source: &GdpTable,
    estimates: &EstimateLookup,
    locations: &LocationTable,
) -> Result<(f64, LagProvenance)> {
    let loc = locations
        .get(location)
        .ok_or_else(|| Error::validation(format!("unknown location {location}")))?;
    if let Some(o) = source.get(location, prev_end_year) {
        return Ok((o.gdp_pc.log10(), LagProvenance::Source));
    }
    if let Some(v) = estimates.get(&(location.to_string(), prev_end_year)) {
        return Ok((v.log10(), LagProvenance::Model));
    }
    if let (LocationLevel::Region, Some(country)) = (loc.level, loc.parent_country.as_deref()) {
        if let Some(o) = source.get(country, prev_end_year) {
            return Ok((o.gdp_pc.log10(), LagProvenance::CountrySource));
        }
        if let Some(v) = estimates.get(&(country.to_string(), prev_end_year)) {
            return Ok((v.log10(), LagProvenance::CountryModel));
        }
    }
    let supra = &loc.supranational_region;
    let mean_at = |level: LocationLevel| -> Option<f64> {
        let vals: Vec<f64> = source
            .iter()
            .filter(|o| o.year == prev_end_year)
            .filter(|o| {
                locations
                    .get(&o.location_id)
                    .is_some_and(|l| l.level == level && &l.supranational_region == supra)
            })
            .map(|o| o.gdp_pc)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    match mean_at(LocationLevel::Country).or_else(|| mean_at(LocationLevel::Region)) {
        Some(m) => Ok((m.log10(), LagProvenance::SupraMean)),
        None => Err(Error::validation(format!(
            "no source GDP for supranational region `{supra}` in {prev_end_year} to fill the lag of {location}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{GdpObservation, Location};

    fn locations() -> LocationTable {
        let c = |id: &str, s: &str| Location {
            id: id.into(),
            name: id.into(),
            level: LocationLevel::Country,
            parent_country: None,
            supranational_region: s.into(),
        };
        let r = |id: &str, p: &str| Location {
            id: id.into(),
            name: id.into(),
            level: LocationLevel::Region,
            parent_country: Some(p.into()),
            supranational_region: String::new(),
        };
        LocationTable::new(vec![
            c("AT", "West"),
            c("DE", "West"),
            c("FR", "West"),
            r("AT1", "AT"),
            r("DE1", "DE"),
        ])
        .unwrap()
    }

    fn obs(loc: &str, year: i32, v: f64) -> GdpObservation {
        GdpObservation {
            location_id: loc.into(),
            year,
            gdp_pc: v,
            source: "test".into(),
        }
    }

    #[test]
    fn falls_through_the_hierarchy() {
        let locs = locations();
        let src = GdpTable::new(vec![obs("DE1", 1750, 1000.0), obs("DE", 1750, 2000.0), obs("FR", 1750, 4000.0)]).unwrap();
        let mut est = EstimateLookup::new();
        est.insert(("AT".into(), 1750), 100.0);

        assert_eq!(initial_gdp("DE1", 1750, &src, &est, &locs).unwrap(), (3.0, LagProvenance::Source));
        assert_eq!(initial_gdp("AT", 1750, &src, &est, &locs).unwrap(), (2.0, LagProvenance::Model));
        assert_eq!(
            initial_gdp("AT1", 1750, &src, &est, &locs).unwrap(),
            (2.0, LagProvenance::CountryModel)
        );

        let no_est = EstimateLookup::new();
        let (v, p) = initial_gdp("AT1", 1750, &src, &no_est, &locs).unwrap();
        assert_eq!(p, LagProvenance::SupraMean);
        assert!((v - 3000f64.log10()).abs() < 1e-12);
        assert!(initial_gdp("AT1", 1700, &src, &no_est, &locs).is_err());
    }

    #[test]
    fn region_uses_country_source_before_estimate() {
        let locs = locations();
        let src = GdpTable::new(vec![obs("AT", 1500, 1000.0)]).unwrap();
        let mut est = EstimateLookup::new();
        est.insert(("AT".into(), 1500), 10.0);
        assert_eq!(
            initial_gdp("AT1", 1500, &src, &est, &locs).unwrap(),
            (3.0, LagProvenance::CountrySource)
        );
    }
}
