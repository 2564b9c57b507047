//! Estimation: baseline, per-period elastic-net training chained through
//! the lagged-income hierarchy, gated prediction, regional rescaling and
//! bootstrap intervals.

mod baseline;
mod bootstrap;
mod gating;
mod periods;
mod records;
mod rescale;
mod run;

pub use baseline::{fit_baseline, BaselineModel, BaselineRow};
pub use bootstrap::{bootstrap_ci, BootstrapOutcome, BootstrapSpec};
pub use gating::GatingPolicy;
pub use periods::{Period, PeriodGrid};
pub use records::{
    audit_rescaling, format_g6, population_proxies, read_estimates, write_estimates, EstimateRecord, RecordKind,
    RescaleAudit, ESTIMATES_HEADER,
};
pub use rescale::{rescale_regions, weighted_mean, Rescaled};
pub use run::{
    predict_gated, run_chain, run_full, run_full_with_cache, train_period, write_json, write_run_outputs,
    ChainOptions, ChainOutput, Chronology, CvSummary, FeatureCache, FullRun, GatedPrediction, ModelKind, Outcome,
    PeriodDesign, PeriodReport, RowResult, RunCounts, RunReport, TrainedPeriodModel,
};
