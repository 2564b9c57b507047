use serde::Serialize;

use crate::config::{GatingRule, GatingThresholds};

/// Minimum unweighted birth/death counts required before a location-year
/// receives an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GatingPolicy {
    pub rule: GatingRule,
    pub thresholds: GatingThresholds,
}

impl Default for GatingPolicy {
    fn default() -> Self {
        Self {
            rule: GatingRule::Both,
            thresholds: GatingThresholds::default(),
        }
    }
}

impl GatingPolicy {
    pub fn threshold(&self, year: i32) -> u32 {
        match year {
            y if y <= 1600 => self.thresholds.early,
            y if y <= 1950 => self.thresholds.middle,
            _ => self.thresholds.late,
        }
    }

    pub fn passes(&self, year: i32, births: u32, deaths: u32) -> bool {
        let t = self.threshold(year);
        match self.rule {
            GatingRule::Both => births >= t && deaths >= t,
            GatingRule::Either => births >= t || deaths >= t,
            GatingRule::Sum => births + deaths >= t,
        }
    }
}
