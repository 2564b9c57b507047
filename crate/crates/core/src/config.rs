//! Run configuration shared by the library entry points and the CLI.
//!
//! The JSON form uses flat keys that mirror the command-line flag names
//! (with `_` in place of `-`). Missing keys take the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// `log10(1 + x)`
    Log10p1,
    /// `ln(x + sqrt(x² + 1))`
    Asinh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatingRule {
    /// births ≥ t and deaths ≥ t
    Both,
    /// births ≥ t or deaths ≥ t
    Either,
    /// births + deaths ≥ t
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvSelectionRule {
    /// Arg-min of the mean fold error, ties toward larger λ.
    MinMean,
    /// Per-fold arg-min, then the average of the per-fold (α, λ) pairs.
    FoldAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapUnit {
    Row,
    /// Resample whole countries (with their regions) together.
    Country,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeMode {
    /// Mean of death year − birth year over deceased individuals.
    Lifespan,
    /// Mean of snapshot year − birth year, capped at the death year.
    AgeAtSnapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatingThresholds {
    /// Snapshot years up to 1600.
    pub early: u32,
    /// Snapshot years 1650 through 1950.
    pub middle: u32,
    /// Snapshot year 2000.
    pub late: u32,
}

impl Default for GatingThresholds {
    fn default() -> Self {
        Self {
            early: 3,
            middle: 5,
            late: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub biographies: Option<PathBuf>,
    pub locations: Option<PathBuf>,
    pub gdp: Option<PathBuf>,
    pub proxies: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub window_years: i32,
    pub scale: Scale,
    pub alpha_grid: Vec<f64>,
    pub n_lambda: usize,
    pub lambda_ratio: f64,
    pub k_folds: usize,
    pub n_splits: usize,
    pub test_fraction: f64,
    pub bootstrap_b: usize,
    pub ci_level: f64,
    pub gating_rule: GatingRule,
    pub gating_thresholds: GatingThresholds,
    pub seed: u64,
    pub reference_year_for_age: i32,
    pub cv_selection_rule: CvSelectionRule,
    pub bootstrap_unit: BootstrapUnit,
    pub age_mode: AgeMode,
    pub min_birth_year: i32,
    pub max_reject_fraction: f64,
    pub n_factors: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            biographies: None,
            locations: None,
            gdp: None,
            proxies: None,
            output_dir: PathBuf::from("out"),
            window_years: 150,
            scale: Scale::Log10p1,
            alpha_grid: default_alpha_grid(),
            n_lambda: 100,
            lambda_ratio: 1e-4,
            k_folds: 10,
            n_splits: 500,
            test_fraction: 0.2,
            bootstrap_b: 200,
            ci_level: 0.90,
            gating_rule: GatingRule::Both,
            gating_thresholds: GatingThresholds::default(),
            seed: 0,
            reference_year_for_age: 2023,
            cv_selection_rule: CvSelectionRule::MinMean,
            bootstrap_unit: BootstrapUnit::Row,
            age_mode: AgeMode::Lifespan,
            min_birth_year: 1100,
            max_reject_fraction: 0.10,
            n_factors: 5,
        }
    }
}

/// `{0, 0.1, 0.2, …, 1.0}`
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::validation(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::validation(m.to_string()));
        if self.window_years <= 0 {
            return bad("window_years must be positive");
        }
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("alpha_grid must be non-empty with values in [0, 1]");
        }
        if self.n_lambda < 1 {
            return bad("n_lambda must be at least 1");
        }
        if !(self.lambda_ratio > 0.0 && self.lambda_ratio < 1.0) {
            return bad("lambda_ratio must lie in (0, 1)");
        }
        if self.k_folds < 2 {
            return bad("k_folds must be at least 2");
        }
        if self.bootstrap_b < 50 {
            return bad("bootstrap_b must be at least 50");
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return bad("ci_level must lie in (0, 1)");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must lie in (0, 1)");
        }
        let t = self.gating_thresholds;
        if t.early == 0 || t.early > t.middle || t.middle > t.late {
            return bad("gating thresholds must be positive and non-decreasing");
        }
        if !(0.0..=1.0).contains(&self.max_reject_fraction) {
            return bad("max_reject_fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_json() {
        let c: RunConfig = serde_json::from_str(r#"{"window_years": 100, "scale": "asinh"}"#).unwrap();
        assert_eq!(c.window_years, 100);
        assert_eq!(c.scale, Scale::Asinh);
        assert_eq!(c.k_folds, 10);
        assert_eq!(c.bootstrap_b, 200);
        assert_eq!(c.alpha_grid.len(), 11);
        assert_eq!(c.reference_year_for_age, 2023);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"windw_years": 1}"#).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let c = RunConfig {
            ci_level: 1.0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RunConfig {
            gating_thresholds: GatingThresholds {
                early: 5,
                middle: 3,
                late: 10,
            },
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
