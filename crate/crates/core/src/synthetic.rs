//! Seeded synthetic worlds with a known GDP-generating process.
//!
//! Biographies are drawn first; the pipeline's own feature code then turns
//! them into candidate features, and log10 GDP is generated as
//!
//! ```text
//! y = c + s[supranational region] + ρ·lag + Σ_k b_k·z_k + ε,   ε ~ N(0, σ²)
//! ```
//!
//! where `z_k` are standardized true features and `lag` is the realized
//! log10 GDP of the same location at the end of the previous period (absent
//! in the earliest period). A random subset of location-years is published
//! as source data.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::features::RowKey;
use crate::ingest::{
    Biographies, BiographyRecord, Dataset, GdpObservation, GdpTable, Location, LocationLevel, LocationTable,
    BIOGRAPHY_HEADER, GDP_HEADER, LOCATION_HEADER,
};
use crate::numerics::column_mean_sd;
use crate::pipeline::{FeatureCache, PeriodGrid};
use crate::seed::child_rng;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_countries: usize,
    /// 0 gives a country-only world.
    pub regions_per_country: usize,
    pub n_occupations: usize,
    pub n_supranational: usize,
    /// Last snapshot year with GDP; earlier snapshots start at 1300.
    pub last_year: i32,
    pub noise_sd: f64,
    pub lag_coefficient: f64,
    /// `(feature name, effect of one standard deviation on log10 GDP)`.
    pub true_features: Vec<(String, f64)>,
    pub supranational_effects: Vec<f64>,
    pub country_label_prob: f64,
    pub region_label_prob: f64,
    /// Range of the mean number of births per decade at a location.
    pub births_per_decade: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_countries: 10,
            regions_per_country: 3,
            n_occupations: 10,
            n_supranational: 3,
            last_year: 1850,
            noise_sd: 0.05,
            lag_coefficient: 0.6,
            true_features: vec![
                ("births.total".into(), 0.15),
                ("immigrants.total".into(), -0.12),
                ("eci.births".into(), 0.12),
            ],
            supranational_effects: vec![-0.15, 0.0, 0.15],
            country_label_prob: 0.6,
            region_label_prob: 0.3,
            births_per_decade: (1.0, 3.0),
            seed: 0,
        }
    }
}

/// Generated log10 GDP of one location-year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truth {
    pub log10: f64,
    /// `log10` without the noise term, given the realized lag.
    pub mean_log10: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub biographies: Biographies,
    pub locations: LocationTable,
    /// Published subset of the truth, level scale.
    pub gdp: GdpTable,
    pub truth: BTreeMap<RowKey, Truth>,
    pub true_features: Vec<String>,
}

const INTERCEPT_FIRST: f64 = 3.0;
/// Keeps log10 GDP near 3.3 once the lag term is active.
const LONG_RUN_LEVEL: f64 = 3.3;

pub fn generate(spec: &SyntheticSpec, config: &RunConfig) -> Result<SyntheticWorld> {
    if spec.supranational_effects.len() != spec.n_supranational {
        return Err(Error::validation("one supranational effect per supranational region required"));
    }
    let locations = build_locations(spec)?;
    let biographies = draw_biographies(spec, &locations)?;

    let grid = PeriodGrid::standard();
    let cache = FeatureCache::build(&biographies, &locations, &grid, config)?;

    // pooled standardization of the true features over the GDP years
    let years: Vec<i32> = cache.years.keys().copied().filter(|y| *y <= spec.last_year).collect();
    let mut z: BTreeMap<RowKey, Vec<f64>> = BTreeMap::new();
    for (name, _) in &spec.true_features {
        let mut all = Vec::new();
        for y in &years {
            let m = &cache.years[y].matrix;
            let col = m
                .column(name)
                .ok_or_else(|| Error::validation(format!("synthetic true feature `{name}` is not a feature column")))?;
            all.extend(m.keys.iter().cloned().zip(col));
        }
        let vals: Vec<f64> = all.iter().map(|(_, v)| *v).collect();
        let (mean, sd) = column_mean_sd(&vals);
        let sd = if sd > 0.0 { sd } else { 1.0 };
        for (k, v) in all {
            z.entry(k).or_default().push((v - mean) / sd);
        }
    }

    let supra_index: BTreeMap<String, usize> = locations
        .supranational_regions()
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    let mut rng = child_rng(spec.seed, "synthetic/gdp", 0);
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::validation(e.to_string()))?;
    let mut truth: BTreeMap<RowKey, Truth> = BTreeMap::new();
    for period in grid.periods() {
        for &y in period.snapshots.iter().filter(|y| years.contains(y)) {
            for l in locations.iter() {
                let key = RowKey::new(l.id.clone(), y);
                let s = spec.supranational_effects[supra_index[locations.supranational_of(&l.id).expect("supra")]];
                let signal: f64 = spec.true_features.iter().zip(&z[&key]).map(|((_, b), zk)| b * zk).sum();
                let lag = period
                    .prev_end
                    .and_then(|p| truth.get(&RowKey::new(l.id.clone(), p)).map(|t| t.log10));
                let mean = match lag {
                    Some(lag) => LONG_RUN_LEVEL * (1.0 - spec.lag_coefficient) + spec.lag_coefficient * lag + s + signal,
                    None => INTERCEPT_FIRST + s + signal,
                };
                let t = Truth {
                    log10: mean + noise.sample(&mut rng),
                    mean_log10: mean,
                };
                truth.insert(key, t);
            }
        }
    }

    let mut label_rng = child_rng(spec.seed, "synthetic/labels", 0);
    let mut obs = Vec::new();
    for (k, t) in &truth {
        let p = match locations.get(&k.location_id).expect("known").level {
            LocationLevel::Country => spec.country_label_prob,
            LocationLevel::Region => spec.region_label_prob,
        };
        if label_rng.random::<f64>() < p {
            obs.push(GdpObservation {
                location_id: k.location_id.clone(),
                year: k.year,
                gdp_pc: 10f64.powf(t.log10),
                source: "synthetic".into(),
            });
        }
    }
    Ok(SyntheticWorld {
        biographies,
        locations,
        gdp: GdpTable::new(obs)?,
        truth,
        true_features: spec.true_features.iter().map(|f| f.0.clone()).collect(),
    })
}

fn build_locations(spec: &SyntheticSpec) -> Result<LocationTable> {
    let mut entries = Vec::new();
    for c in 0..spec.n_countries {
        let id = format!("C{c:02}");
        entries.push(Location {
            id: id.clone(),
            name: format!("Country {c}"),
            level: LocationLevel::Country,
            parent_country: None,
            supranational_region: format!("S{}", c % spec.n_supranational),
        });
        for r in 0..spec.regions_per_country {
            entries.push(Location {
                id: format!("{id}R{r}"),
                name: format!("Region {c}.{r}"),
                level: LocationLevel::Region,
                parent_country: Some(id.clone()),
                supranational_region: String::new(),
            });
        }
    }
    LocationTable::new(entries)
}

fn draw_biographies(spec: &SyntheticSpec, locations: &LocationTable) -> Result<Biographies> {
    let mut rng = child_rng(spec.seed, "synthetic/biographies", 0);
    let leaves: Vec<String> = locations
        .iter()
        .filter(|l| l.level == LocationLevel::Region || locations.regions_of(&l.id).is_empty())
        .map(|l| l.id.clone())
        .collect();
    let std_normal: Normal<f64> = Normal::new(0.0, 1.0).expect("valid");
    let occupations: Vec<String> = (0..spec.n_occupations).map(|k| format!("occ{k:02}")).collect();

    struct Profile {
        base: f64,
        growth: f64,
        attraction: f64,
        occupation_weights: Vec<f64>,
    }
    let profiles: Vec<Profile> = leaves
        .iter()
        .map(|_| Profile {
            base: rng.random_range(spec.births_per_decade.0..spec.births_per_decade.1),
            growth: rng.random_range(0.9..1.3),
            attraction: (0.8 * std_normal.sample(&mut rng) as f64).exp(),
            occupation_weights: (0..spec.n_occupations).map(|_| f64::exp(std_normal.sample(&mut rng))).collect(),
        })
        .collect();
    let total_attraction: f64 = profiles.iter().map(|p| p.attraction).sum();
    let pick = |rng: &mut crate::seed::Rng, weights: &[f64], total: f64| -> usize {
        let mut u = rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        weights.len() - 1
    };
    let attractions: Vec<f64> = profiles.iter().map(|p| p.attraction).collect();

    let first_cohort = 1300 - 150;
    let mut records = Vec::new();
    for (h, home) in leaves.iter().enumerate() {
        let prof = &profiles[h];
        let occ_total: f64 = prof.occupation_weights.iter().sum();
        for decade in (first_cohort..=spec.last_year).step_by(10) {
            let rate = prof.base * prof.growth.powf(f64::from(decade - first_cohort) / 100.0);
            let n = Poisson::new(rate).map_err(|e| Error::validation(e.to_string()))?.sample(&mut rng) as usize;
            for _ in 0..n {
                let birth_year = decade + rng.random_range(0..10);
                let death_year = birth_year + rng.random_range(30..80);
                let birth_location = if rng.random::<f64>() < 0.1 {
                    locations.country_of(home).unwrap_or(home).to_string()
                } else {
                    home.clone()
                };
                let death_location = match rng.random::<f64>() {
                    u if u < 0.05 => None,
                    u if u < 0.75 => Some(home.clone()),
                    _ => Some(leaves[pick(&mut rng, &attractions, total_attraction)].clone()),
                };
                let occupation = occupations[pick(&mut rng, &prof.occupation_weights, occ_total)].clone();
                let id = format!("p{:06}", records.len());
                records.push(BiographyRecord {
                    name: format!("Person {id}"),
                    person_id: id,
                    birth_year,
                    death_year: Some(death_year),
                    birth_location: Some(birth_location),
                    death_location,
                    occupation,
                    pageviews: 10f64.powf(3.0 + 0.7 * std_normal.sample(&mut rng)),
                    language_editions: 2 + Poisson::new(3.0).expect("valid").sample(&mut rng) as u32,
                });
            }
        }
    }
    Biographies::new(records)
}

impl SyntheticWorld {
    pub fn dataset(&self) -> Dataset {
        Dataset {
            biographies: self.biographies.clone(),
            locations: self.locations.clone(),
            gdp: self.gdp.clone(),
            rejects: Vec::new(),
            total_rows: self.biographies.len(),
            warnings: Vec::new(),
        }
    }

    /// Writes `biographies.csv`, `locations.csv` and `gdp.csv` into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |e: csv::Error| Error::io(&p, e.into())
        };

        let path = dir.join("biographies.csv");
        let mut w = csv::Writer::from_path(&path).map_err(io(&path))?;
        w.write_record(BIOGRAPHY_HEADER).map_err(io(&path))?;
        for r in self.biographies.records() {
            w.write_record([
                r.person_id.clone(),
                r.name.clone(),
                r.birth_year.to_string(),
                r.death_year.map(|d| d.to_string()).unwrap_or_default(),
                r.birth_location.clone().unwrap_or_default(),
                r.death_location.clone().unwrap_or_default(),
                r.occupation.clone(),
                format!("{:?}", r.pageviews),
                r.language_editions.to_string(),
            ])
            .map_err(io(&path))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("locations.csv");
        let mut w = csv::Writer::from_path(&path).map_err(io(&path))?;
        w.write_record(LOCATION_HEADER).map_err(io(&path))?;
        for l in self.locations.iter() {
            let level = match l.level {
                LocationLevel::Country => "country",
                LocationLevel::Region => "region",
            };
            let supra = if l.level == LocationLevel::Country { l.supranational_region.as_str() } else { "" };
            w.write_record([
                l.id.as_str(),
                l.name.as_str(),
                level,
                l.parent_country.as_deref().unwrap_or(""),
                supra,
            ])
            .map_err(io(&path))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("gdp.csv");
        let mut w = csv::Writer::from_path(&path).map_err(io(&path))?;
        w.write_record(GDP_HEADER).map_err(io(&path))?;
        for o in self.gdp.iter() {
            w.write_record([
                o.location_id.clone(),
                o.year.to_string(),
                format!("{:?}", o.gdp_pc),
                o.source.clone(),
            ])
            .map_err(io(&path))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }
}
