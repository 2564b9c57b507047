//! Loading, validating and indexing the three input tables, and assigning
//! individuals to location flows for a snapshot year.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

pub const BIOGRAPHY_HEADER: [&str; 9] = [
    "person_id",
    "name",
    "birth_year",
    "death_year",
    "birth_location_id",
    "death_location_id",
    "occupation",
    "pageviews",
    "language_editions",
];
pub const LOCATION_HEADER: [&str; 5] = [
    "location_id",
    "name",
    "level",
    "parent_country_id",
    "supranational_region",
];
pub const GDP_HEADER: [&str; 4] = ["location_id", "year", "gdp_pc_2011usd", "source"];

/// Snapshot years 1300, 1350, …, 2000.
pub fn snapshot_years() -> impl Iterator<Item = i32> {
    (1300..=2000).step_by(50)
}

pub fn is_snapshot_year(year: i32) -> bool {
    (1300..=2000).contains(&year) && year % 50 == 0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiographyRecord {
    pub person_id: String,
    pub name: String,
    pub birth_year: i32,
    pub death_year: Option<i32>,
    pub birth_location: Option<String>,
    pub death_location: Option<String>,
    /// Trimmed and lower-cased.
    pub occupation: String,
    pub pageviews: f64,
    pub language_editions: u32,
}

impl BiographyRecord {
    pub fn lifespan(&self) -> Option<i32> {
        self.death_year.map(|d| d - self.birth_year)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reject {
    pub file: String,
    pub line: u64,
    pub person_id: String,
    pub reason: String,
}

/// Biography records in canonical order (sorted by `person_id`, ids unique).
///
/// Flow assignments index into this ordering, which makes everything
/// downstream independent of the order rows appeared in the input file.
#[derive(Debug, Clone, Default)]
pub struct Biographies {
    records: Vec<BiographyRecord>,
}

impl Biographies {
    pub fn new(mut records: Vec<BiographyRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.person_id.cmp(&b.person_id));
        if let Some(w) = records.windows(2).find(|w| w[0].person_id == w[1].person_id) {
            return Err(Error::validation(format!("duplicate person_id {}", w[0].person_id)));
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[BiographyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, idx: usize) -> Option<&BiographyRecord> {
        self.records.get(idx)
    }

    /// Sorted distinct occupations.
    pub fn occupations(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.occupation.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LoadedBiographies {
    pub biographies: Biographies,
    pub rejects: Vec<Reject>,
    pub total_rows: usize,
    pub warnings: Vec<String>,
}

impl LoadedBiographies {
    pub fn reject_fraction(&self) -> f64 {
        if self.total_rows == 0 {
            0.0
        } else {
            self.rejects.len() as f64 / self.total_rows as f64
        }
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file))
}

/// Maps each required column name to its position in the file header.
fn column_index(
    reader: &mut csv::Reader<File>,
    path: &Path,
    required: &[&str],
) -> Result<Vec<usize>> {
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    required
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("missing column `{name}`"),
                })
        })
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

fn parse_year(path: &Path, line: u64, field: &str, raw: &str) -> Result<i32> {
    raw.trim().parse::<i32>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("unparseable {field} `{raw}`"),
    })
}

fn non_empty(s: &str) -> Option<String> {
    let t = s.trim();
    (!t.is_empty()).then(|| t.to_string())
}

pub fn load_biographies(path: &Path) -> Result<LoadedBiographies> {
    let mut reader = open_csv(path)?;
    let col = column_index(&mut reader, path, &BIOGRAPHY_HEADER)?;
    let file = path.display().to_string();

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = BTreeSet::new();
    let mut total_rows = 0;
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        total_rows += 1;
        let line = row.position().map_or(0, |p| p.line());
        let get = |k: usize| row.get(col[k]).unwrap_or("");
        let person_id = get(0).trim().to_string();
        let mut reject = |reason: &str| {
            rejects.push(Reject {
                file: file.clone(),
                line,
                person_id: person_id.clone(),
                reason: reason.to_string(),
            })
        };

        let birth_year = parse_year(path, line, "birth_year", get(2))?;
        let death_year = match get(3).trim() {
            "" => None,
            raw => Some(parse_year(path, line, "death_year", raw)?),
        };
        if person_id.is_empty() {
            reject("missing person_id");
            continue;
        }
        if death_year.is_some_and(|d| d < birth_year) {
            reject("negative lifespan");
            continue;
        }
        let pageviews = match get(7).trim().parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => v,
            Ok(_) => {
                reject("negative or non-finite pageviews");
                continue;
            }
            Err(_) => {
                reject("unparseable pageviews");
                continue;
            }
        };
        let language_editions = match get(8).trim().parse::<u32>() {
            Ok(v) if v >= 1 => v,
            Ok(_) => {
                reject("language_editions must be positive");
                continue;
            }
            Err(_) => {
                reject("unparseable language_editions");
                continue;
            }
        };
        if !seen.insert(person_id.clone()) {
            reject("duplicate person_id");
            continue;
        }
        records.push(BiographyRecord {
            person_id,
            name: get(1).to_string(),
            birth_year,
            death_year,
            birth_location: non_empty(get(4)),
            death_location: non_empty(get(5)),
            occupation: get(6).trim().to_lowercase(),
            pageviews,
            language_editions,
        });
    }

    let mut warnings = Vec::new();
    if total_rows == 0 {
        warnings.push(format!("{}: no biography rows", path.display()));
    }
    Ok(LoadedBiographies {
        biographies: Biographies::new(records)?,
        rejects,
        total_rows,
        warnings,
    })
}

pub fn write_rejects(path: &Path, rejects: &[Reject]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["file", "line", "person_id", "reason"])
        .map_err(|e| csv_error(path, e))?;
    for r in rejects {
        w.write_record([r.file.as_str(), &r.line.to_string(), &r.person_id, &r.reason])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// --- locations ---------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationLevel {
    Country,
    Region,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Location {
    pub id: String,
    pub name: String,
    pub level: LocationLevel,
    pub parent_country: Option<String>,
    pub supranational_region: String,
}

#[derive(Debug, Clone, Default)]
pub struct LocationTable {
    entries: BTreeMap<String, Location>,
}

impl LocationTable {
    /// Validates the hierarchy. Regions with an empty supranational region
    /// inherit their country's.
    pub fn new(entries: Vec<Location>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for e in entries {
            if e.id.is_empty() {
                return Err(Error::validation("empty location_id"));
            }
            let id = e.id.clone();
            if map.insert(id.clone(), e).is_some() {
                return Err(Error::validation(format!("duplicate location_id {id}")));
            }
        }
        let snapshot = map.clone();
        for loc in map.values_mut() {
            match loc.level {
                LocationLevel::Country => {
                    if loc.supranational_region.is_empty() {
                        return Err(Error::validation(format!(
                            "country {} has no supranational_region",
                            loc.id
                        )));
                    }
                    loc.parent_country = None;
                }
                LocationLevel::Region => {
                    let parent = loc.parent_country.as_ref().and_then(|p| snapshot.get(p));
                    let parent = match parent {
                        Some(p) if p.level == LocationLevel::Country => p,
                        _ => {
                            return Err(Error::validation(format!(
                                "region {} has no valid parent country",
                                loc.id
                            )))
                        }
                    };
                    if loc.supranational_region.is_empty() {
                        loc.supranational_region = parent.supranational_region.clone();
                    } else if loc.supranational_region != parent.supranational_region {
                        return Err(Error::validation(format!(
                            "region {} supranational_region `{}` differs from its country's `{}`",
                            loc.id, loc.supranational_region, parent.supranational_region
                        )));
                    }
                }
            }
        }
        Ok(Self { entries: map })
    }

    pub fn get(&self, id: &str) -> Option<&Location> {
        self.entries.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Location> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids_at(&self, level: LocationLevel) -> Vec<String> {
        self.iter()
            .filter(|l| l.level == level)
            .map(|l| l.id.clone())
            .collect()
    }

    pub fn countries(&self) -> Vec<String> {
        self.ids_at(LocationLevel::Country)
    }

    /// The location itself for a country, the parent for a region.
    pub fn country_of(&self, id: &str) -> Option<&str> {
        let loc = self.get(id)?;
        match loc.level {
            LocationLevel::Country => Some(&loc.id),
            LocationLevel::Region => loc.parent_country.as_deref(),
        }
    }

    pub fn regions_of(&self, country: &str) -> Vec<String> {
        self.iter()
            .filter(|l| l.parent_country.as_deref() == Some(country))
            .map(|l| l.id.clone())
            .collect()
    }

    pub fn supranational_of(&self, id: &str) -> Option<&str> {
        self.get(id).map(|l| l.supranational_region.as_str())
    }

    /// Sorted distinct supranational regions.
    pub fn supranational_regions(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.iter().map(|l| l.supranational_region.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }
}

pub fn load_locations(path: &Path) -> Result<LocationTable> {
    let mut reader = open_csv(path)?;
    let col = column_index(&mut reader, path, &LOCATION_HEADER)?;
    let mut entries = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let get = |k: usize| row.get(col[k]).unwrap_or("").trim();
        let level = match get(2).to_lowercase().as_str() {
            "country" => LocationLevel::Country,
            "region" => LocationLevel::Region,
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("unknown level `{other}`"),
                })
            }
        };
        entries.push(Location {
            id: get(0).to_string(),
            name: get(1).to_string(),
            level,
            parent_country: non_empty(get(3)),
            supranational_region: get(4).to_string(),
        });
    }
    LocationTable::new(entries).map_err(|e| match e {
        Error::Validation(m) => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: m,
        },
        other => other,
    })
}

// --- GDP observations --------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GdpObservation {
    pub location_id: String,
    pub year: i32,
    pub gdp_pc: f64,
    pub source: String,
}

/// Observations keyed by `(location_id, year)`.
#[derive(Debug, Clone, Default)]
pub struct GdpTable {
    obs: BTreeMap<(String, i32), GdpObservation>,
}

impl GdpTable {
    pub fn new(observations: Vec<GdpObservation>) -> Result<Self> {
        let mut obs = BTreeMap::new();
        for o in observations {
            if !(o.gdp_pc > 0.0 && o.gdp_pc.is_finite()) {
                return Err(Error::validation(format!(
                    "non-positive GDP for {} in {}",
                    o.location_id, o.year
                )));
            }
            if !is_snapshot_year(o.year) {
                return Err(Error::validation(format!(
                    "year {} for {} is not on the 50-year grid",
                    o.year, o.location_id
                )));
            }
            let key = (o.location_id.clone(), o.year);
            if obs.insert(key, o).is_some() {
                return Err(Error::validation("duplicate (location, year) observation"));
            }
        }
        Ok(Self { obs })
    }

    pub fn get(&self, location: &str, year: i32) -> Option<&GdpObservation> {
        self.obs.get(&(location.to_string(), year))
    }

    pub fn iter(&self) -> impl Iterator<Item = &GdpObservation> {
        self.obs.values()
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Keeps observations for which `keep` returns true.
    pub fn filtered(&self, mut keep: impl FnMut(&GdpObservation) -> bool) -> GdpTable {
        GdpTable {
            obs: self
                .obs
                .iter()
                .filter(|(_, o)| keep(o))
                .map(|(k, o)| (k.clone(), o.clone()))
                .collect(),
        }
    }
}

pub fn load_gdp(path: &Path, locations: &LocationTable) -> Result<GdpTable> {
    let mut reader = open_csv(path)?;
    let col = column_index(&mut reader, path, &GDP_HEADER)?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let get = |k: usize| row.get(col[k]).unwrap_or("").trim();
        let fail = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let location_id = get(0).to_string();
        if !locations.contains(&location_id) {
            return Err(fail(format!("unknown location `{location_id}`")));
        }
        let year = parse_year(path, line, "year", get(1))?;
        if !is_snapshot_year(year) {
            return Err(fail(format!("year {year} is not on the 50-year grid 1300..2000")));
        }
        let gdp_pc: f64 = get(2)
            .parse()
            .map_err(|_| fail(format!("unparseable gdp_pc_2011usd `{}`", get(2))))?;
        if !(gdp_pc > 0.0 && gdp_pc.is_finite()) {
            return Err(fail(format!("gdp_pc_2011usd must be positive, got {gdp_pc}")));
        }
        if !seen.insert((location_id.clone(), year)) {
            return Err(fail(format!("duplicate observation for {location_id} in {year}")));
        }
        out.push(GdpObservation {
            location_id,
            year,
            gdp_pc,
            source: get(3).to_string(),
        });
    }
    GdpTable::new(out)
}

// --- eligibility and flows ---------------------------------------------------

/// Keeps records with ≥ 2 language editions, a non-empty occupation, a
/// birth year at or after `min_birth_year`, and at least one known location.
pub fn filter_eligible(
    bios: &Biographies,
    locations: &LocationTable,
    min_birth_year: i32,
) -> Biographies {
    let known = |l: &Option<String>| l.as_deref().is_some_and(|id| locations.contains(id));
    let records = bios
        .records()
        .iter()
        .filter(|r| {
            r.language_editions >= 2
                && !r.occupation.is_empty()
                && r.birth_year >= min_birth_year
                && (known(&r.birth_location) || known(&r.death_location))
        })
        .cloned()
        .collect();
    Biographies { records }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    Births,
    Deaths,
    Immigrants,
    Emigrants,
}

impl Flow {
    pub const ALL: [Flow; 4] = [Flow::Births, Flow::Deaths, Flow::Immigrants, Flow::Emigrants];

    pub fn name(self) -> &'static str {
        match self {
            Flow::Births => "births",
            Flow::Deaths => "deaths",
            Flow::Immigrants => "immigrants",
            Flow::Emigrants => "emigrants",
        }
    }
}

/// Record indices (into [`Biographies`]) per flow for one location.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowSets {
    pub births: BTreeSet<usize>,
    pub deaths: BTreeSet<usize>,
    pub immigrants: BTreeSet<usize>,
    pub emigrants: BTreeSet<usize>,
}

impl FlowSets {
    pub fn get(&self, flow: Flow) -> &BTreeSet<usize> {
        match flow {
            Flow::Births => &self.births,
            Flow::Deaths => &self.deaths,
            Flow::Immigrants => &self.immigrants,
            Flow::Emigrants => &self.emigrants,
        }
    }

    fn get_mut(&mut self, flow: Flow) -> &mut BTreeSet<usize> {
        match flow {
            Flow::Births => &mut self.births,
            Flow::Deaths => &mut self.deaths,
            Flow::Immigrants => &mut self.immigrants,
            Flow::Emigrants => &mut self.emigrants,
        }
    }

    /// Deduplicated union of all four sets.
    pub fn everyone(&self) -> BTreeSet<usize> {
        Flow::ALL.iter().flat_map(|f| self.get(*f).iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowAssignment {
    pub snapshot_year: i32,
    pub window_years: i32,
    /// One entry for every location in the table, possibly empty.
    pub by_location: BTreeMap<String, FlowSets>,
}

impl FlowAssignment {
    pub fn sets(&self, location: &str) -> Option<&FlowSets> {
        self.by_location.get(location)
    }

    pub fn count(&self, location: &str, flow: Flow) -> usize {
        self.sets(location).map_or(0, |s| s.get(flow).len())
    }

    pub fn person_ids<'a>(
        &self,
        bios: &'a Biographies,
        location: &str,
        flow: Flow,
    ) -> BTreeSet<&'a str> {
        self.sets(location)
            .map(|s| {
                s.get(flow)
                    .iter()
                    .map(|&i| bios.records()[i].person_id.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Assigns everyone born in `[snapshot_year − window_years, snapshot_year]`
/// to birth, death, immigration and emigration sets. Region-level entries
/// are also credited to the parent country.
pub fn assign_flows(
    bios: &Biographies,
    locations: &LocationTable,
    snapshot_year: i32,
    window_years: i32,
) -> FlowAssignment {
    let mut by_location: BTreeMap<String, FlowSets> = locations
        .iter()
        .map(|l| (l.id.clone(), FlowSets::default()))
        .collect();
    let lo = snapshot_year - window_years;

    let mut credit = |loc: &str, flow: Flow, idx: usize| {
        by_location.get_mut(loc).expect("known").get_mut(flow).insert(idx);
        if let Some(parent) = locations.get(loc).and_then(|l| l.parent_country.as_deref()) {
            by_location.get_mut(parent).expect("known").get_mut(flow).insert(idx);
        }
    };

    for (idx, r) in bios.records().iter().enumerate() {
        if r.birth_year < lo || r.birth_year > snapshot_year {
            continue;
        }
        let birth = r.birth_location.as_deref().filter(|l| locations.contains(l));
        let death = r.death_location.as_deref().filter(|l| locations.contains(l));
        if let Some(b) = birth {
            credit(b, Flow::Births, idx);
        }
        if let Some(d) = death {
            credit(d, Flow::Deaths, idx);
        }
        if let (Some(b), Some(d)) = (birth, death) {
            if b != d {
                credit(b, Flow::Emigrants, idx);
                credit(d, Flow::Immigrants, idx);
            }
        }
    }
    FlowAssignment {
        snapshot_year,
        window_years,
        by_location,
    }
}

/// Paths of the three input tables.
#[derive(Debug, Clone)]
pub struct InputPaths {
    pub biographies: PathBuf,
    pub locations: PathBuf,
    pub gdp: PathBuf,
}

/// Everything the pipeline needs, loaded and validated.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub biographies: Biographies,
    pub locations: LocationTable,
    pub gdp: GdpTable,
    pub rejects: Vec<Reject>,
    pub total_rows: usize,
    pub warnings: Vec<String>,
}

impl Dataset {
    /// Loads all inputs and applies the eligibility filter. Fails when more
    /// than `max_reject_fraction` of the biography rows were rejected.
    pub fn load(paths: &InputPaths, min_birth_year: i32, max_reject_fraction: f64) -> Result<Self> {
        let locations = load_locations(&paths.locations)?;
        let gdp = load_gdp(&paths.gdp, &locations)?;
        let loaded = load_biographies(&paths.biographies)?;
        if loaded.reject_fraction() > max_reject_fraction {
            return Err(Error::validation(format!(
                "{} of {} biography rows rejected (limit {:.0}%)",
                loaded.rejects.len(),
                loaded.total_rows,
                max_reject_fraction * 100.0
            )));
        }
        let biographies = filter_eligible(&loaded.biographies, &locations, min_birth_year);
        Ok(Self {
            biographies,
            locations,
            gdp,
            rejects: loaded.rejects,
            total_rows: loaded.total_rows,
            warnings: loaded.warnings,
        })
    }
}
