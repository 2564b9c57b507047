use std::collections::BTreeMap;

use crate::config::AgeMode;
use crate::error::{Error, Result};
use crate::ingest::{Biographies, Flow, FlowAssignment};

/// Weighted and unweighted location × occupation counts for each flow.
#[derive(Debug, Clone)]
pub struct CountTensor {
    pub locations: Vec<String>,
    pub occupations: Vec<String>,
    weighted: [Vec<f64>; 4],
    unweighted: [Vec<u32>; 4],
}

fn flow_slot(flow: Flow) -> usize {
    match flow {
        Flow::Births => 0,
        Flow::Deaths => 1,
        Flow::Immigrants => 2,
        Flow::Emigrants => 3,
    }
}

impl CountTensor {
    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn n_occupations(&self) -> usize {
        self.occupations.len()
    }

    /// HPI-weighted count `N_ik`.
    pub fn weighted(&self, flow: Flow, loc: usize, occ: usize) -> f64 {
        self.weighted[flow_slot(flow)][loc * self.occupations.len() + occ]
    }

    pub fn unweighted(&self, flow: Flow, loc: usize, occ: usize) -> u32 {
        self.unweighted[flow_slot(flow)][loc * self.occupations.len() + occ]
    }

    pub fn weighted_row(&self, flow: Flow, loc: usize) -> &[f64] {
        let k = self.occupations.len();
        &self.weighted[flow_slot(flow)][loc * k..(loc + 1) * k]
    }

    /// Number of individuals in the flow at the location.
    pub fn total(&self, flow: Flow, loc: usize) -> u32 {
        let k = self.occupations.len();
        self.unweighted[flow_slot(flow)][loc * k..(loc + 1) * k].iter().sum()
    }

    pub fn weighted_total(&self, flow: Flow, loc: usize) -> f64 {
        self.weighted_row(flow, loc).iter().sum()
    }

    /// Builds a tensor directly from per-flow weighted and unweighted matrices
    /// (row-major, locations × occupations).
    pub fn from_parts(
        locations: Vec<String>,
        occupations: Vec<String>,
        weighted: [Vec<f64>; 4],
        unweighted: [Vec<u32>; 4],
    ) -> Result<Self> {
        let n = locations.len() * occupations.len();
        if weighted.iter().any(|w| w.len() != n) || unweighted.iter().any(|u| u.len() != n) {
            return Err(Error::validation("count tensor shape mismatch"));
        }
        if weighted.iter().flatten().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::validation("count tensor entries must be finite and non-negative"));
        }
        Ok(Self {
            locations,
            occupations,
            weighted,
            unweighted,
        })
    }
}

/// Accumulates `max(HPI, 0)` weights (and plain counts) per location,
/// occupation and flow for the given `locations`.
pub fn flow_counts(
    flows: &FlowAssignment,
    bios: &Biographies,
    weights: &[f64],
    locations: &[String],
    occupations: &[String],
) -> Result<CountTensor> {
    let k = occupations.len();
    let occ_index: BTreeMap<&str, usize> = occupations
        .iter()
        .enumerate()
        .map(|(i, o)| (o.as_str(), i))
        .collect();
    let mut weighted: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; locations.len() * k]);
    let mut unweighted: [Vec<u32>; 4] = std::array::from_fn(|_| vec![0; locations.len() * k]);
    for (li, loc) in locations.iter().enumerate() {
        let Some(sets) = flows.sets(loc) else {
            continue;
        };
        for flow in Flow::ALL {
            for &idx in sets.get(flow) {
                let rec = bios.get(idx).ok_or_else(|| {
                    Error::validation(format!("flow entry {idx} at {loc} has no biography record"))
                })?;
                let occ = *occ_index.get(rec.occupation.as_str()).ok_or_else(|| {
                    Error::validation(format!("occupation `{}` not indexed", rec.occupation))
                })?;
                let w = weights.get(idx).copied().unwrap_or(0.0).max(0.0);
                let s = flow_slot(flow);
                weighted[s][li * k + occ] += w;
                unweighted[s][li * k + occ] += 1;
            }
        }
    }
    Ok(CountTensor {
        locations: locations.to_vec(),
        occupations: occupations.to_vec(),
        weighted,
        unweighted,
    })
}

/// Number of occupations with at least one individual.
pub fn diversity(counts: &CountTensor, flow: Flow) -> Vec<usize> {
    (0..counts.n_locations())
        .map(|i| {
            (0..counts.n_occupations())
                .filter(|&k| counts.unweighted(flow, i, k) >= 1)
                .count()
        })
        .collect()
}

/// Mean ubiquity of the occupations present in each location. Empty
/// locations get 0 and a `true` flag.
pub fn avg_ubiquity(counts: &CountTensor, flow: Flow) -> (Vec<f64>, Vec<bool>) {
    let ubiquity: Vec<usize> = (0..counts.n_occupations())
        .map(|k| {
            (0..counts.n_locations())
                .filter(|&i| counts.unweighted(flow, i, k) >= 1)
                .count()
        })
        .collect();
    let mut flags = Vec::with_capacity(counts.n_locations());
    let values = (0..counts.n_locations())
        .map(|i| {
            let present: Vec<usize> = (0..counts.n_occupations())
                .filter(|&k| counts.unweighted(flow, i, k) >= 1)
                .collect();
            flags.push(present.is_empty());
            if present.is_empty() {
                0.0
            } else {
                present.iter().map(|&k| ubiquity[k] as f64).sum::<f64>() / present.len() as f64
            }
        })
        .collect();
    (values, flags)
}

/// Mean age per location over everyone in any of its four flows.
///
/// Locations without a qualifying individual receive the mean over all
/// qualifying individuals of the listed locations, and a `true` flag.
pub fn avg_age(
    flows: &FlowAssignment,
    bios: &Biographies,
    locations: &[String],
    mode: AgeMode,
) -> (Vec<f64>, Vec<bool>) {
    let age_of = |idx: usize| -> Option<f64> {
        let r = bios.get(idx)?;
        match mode {
            AgeMode::Lifespan => r.lifespan().map(f64::from),
            AgeMode::AgeAtSnapshot => {
                let end = r.death_year.map_or(flows.snapshot_year, |d| d.min(flows.snapshot_year));
                Some(f64::from(end - r.birth_year))
            }
        }
    };
    let mut global = std::collections::BTreeSet::new();
    let per_loc: Vec<Option<f64>> = locations
        .iter()
        .map(|loc| {
            let people = flows.sets(loc).map(|s| s.everyone()).unwrap_or_default();
            let ages: Vec<f64> = people
                .iter()
                .filter_map(|&i| {
                    let a = age_of(i)?;
                    global.insert(i);
                    Some(a)
                })
                .collect();
            (!ages.is_empty()).then(|| ages.iter().sum::<f64>() / ages.len() as f64)
        })
        .collect();
    let global_ages: Vec<f64> = global.iter().filter_map(|&i| age_of(i)).collect();
    let fallback = if global_ages.is_empty() {
        0.0
    } else {
        global_ages.iter().sum::<f64>() / global_ages.len() as f64
    };
    let flags = per_loc.iter().map(Option::is_none).collect();
    (per_loc.into_iter().map(|a| a.unwrap_or(fallback)).collect(), flags)
}
