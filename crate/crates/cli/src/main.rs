use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use histgdp::config::{AgeMode, BootstrapUnit, CvSelectionRule, GatingRule, RunConfig, Scale};
use histgdp::evaluation::{evaluate_models, load_proxies, proxy_correlation, write_evaluation, ProxyTransform};
use histgdp::explain::{explain_rows, explain_rows_sampled, rank_features, write_importance, write_shapley};
use histgdp::ingest::{write_rejects, Dataset, InputPaths};
use histgdp::pipeline::{
    audit_rescaling, population_proxies, read_estimates, run_full_with_cache, write_json, write_run_outputs,
    FeatureCache, PeriodGrid,
};
use histgdp::{Error, Result};

/// Relative tolerance of the rescaling audit on in-memory estimates.
const AUDIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "histgdp", version, about = "Historical GDP per capita estimation from biography records")]
struct Cli {
    /// Worker threads for parallel sections (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate the inputs, report rejects.
    Validate(Common),
    /// Write the biography-derived feature matrix of every snapshot year.
    Features(Common),
    /// Train all periods and write estimates with confidence intervals.
    Estimate(Common),
    /// Country-held-out comparison of the full model and the baseline.
    Evaluate(Common),
    /// Shapley attributions of every trained period model.
    Explain {
        #[command(flatten)]
        common: Common,
        /// Estimate by permutation sampling instead of the exact linear formula.
        #[arg(long)]
        permutations: Option<usize>,
    },
    /// Correlate estimates with an external proxy series.
    Correlate {
        #[command(flatten)]
        common: Common,
        /// Estimates to correlate (default: <output-dir>/estimates.csv).
        #[arg(long)]
        estimates: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Transform::Log10)]
        transform: Transform,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Transform {
    None,
    Log10,
}

/// Every run-config field as an optional flag; unset flags fall back to the
/// config file, then to the defaults.
#[derive(Debug, Clone, Args)]
struct Common {
    /// JSON config with keys named like the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    biographies: Option<PathBuf>,
    #[arg(long)]
    locations: Option<PathBuf>,
    #[arg(long)]
    gdp: Option<PathBuf>,
    #[arg(long)]
    proxies: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    window_years: Option<i32>,
    #[arg(long, value_parser = ["log10p1", "asinh"])]
    scale: Option<String>,
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Option<Vec<f64>>,
    #[arg(long)]
    n_lambda: Option<usize>,
    #[arg(long)]
    lambda_ratio: Option<f64>,
    #[arg(long)]
    k_folds: Option<usize>,
    #[arg(long)]
    n_splits: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    bootstrap_b: Option<usize>,
    #[arg(long)]
    ci_level: Option<f64>,
    #[arg(long, value_parser = ["both", "either", "sum"])]
    gating_rule: Option<String>,
    #[arg(long)]
    gating_early: Option<u32>,
    #[arg(long)]
    gating_middle: Option<u32>,
    #[arg(long)]
    gating_late: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reference_year_for_age: Option<i32>,
    #[arg(long, value_parser = ["min_mean", "fold_average"])]
    cv_selection_rule: Option<String>,
    #[arg(long, value_parser = ["row", "country"])]
    bootstrap_unit: Option<String>,
    #[arg(long, value_parser = ["lifespan", "age_at_snapshot"])]
    age_mode: Option<String>,
    #[arg(long)]
    min_birth_year: Option<i32>,
    #[arg(long)]
    max_reject_fraction: Option<f64>,
    #[arg(long)]
    n_factors: Option<usize>,
}

impl Common {
    /// flag > config file > default
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    c.$f = v.clone().into();
                }
            )*};
        }
        set!(biographies, locations, gdp, proxies);
        set!(output_dir, window_years, alpha_grid, n_lambda, lambda_ratio, k_folds, n_splits);
        set!(test_fraction, bootstrap_b, ci_level, seed, reference_year_for_age, min_birth_year);
        set!(max_reject_fraction, n_factors);
        if let Some(s) = &self.scale {
            c.scale = if s == "asinh" { Scale::Asinh } else { Scale::Log10p1 };
        }
        if let Some(s) = &self.gating_rule {
            c.gating_rule = match s.as_str() {
                "either" => GatingRule::Either,
                "sum" => GatingRule::Sum,
                _ => GatingRule::Both,
            };
        }
        if let Some(t) = self.gating_early {
            c.gating_thresholds.early = t;
        }
        if let Some(t) = self.gating_middle {
            c.gating_thresholds.middle = t;
        }
        if let Some(t) = self.gating_late {
            c.gating_thresholds.late = t;
        }
        if let Some(s) = &self.cv_selection_rule {
            c.cv_selection_rule = if s == "fold_average" {
                CvSelectionRule::FoldAverage
            } else {
                CvSelectionRule::MinMean
            };
        }
        if let Some(s) = &self.bootstrap_unit {
            c.bootstrap_unit = if s == "country" { BootstrapUnit::Country } else { BootstrapUnit::Row };
        }
        if let Some(s) = &self.age_mode {
            c.age_mode = if s == "age_at_snapshot" {
                AgeMode::AgeAtSnapshot
            } else {
                AgeMode::Lifespan
            };
        }
        c.validate()?;
        Ok(c)
    }
}

fn required<'a>(p: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::validation(format!("missing required path --{name}")))
}

fn load(c: &RunConfig) -> Result<Dataset> {
    let paths = InputPaths {
        biographies: required(&c.biographies, "biographies")?.to_path_buf(),
        locations: required(&c.locations, "locations")?.to_path_buf(),
        gdp: required(&c.gdp, "gdp")?.to_path_buf(),
    };
    let data = Dataset::load(&paths, c.min_birth_year, c.max_reject_fraction)?;
    for w in &data.warnings {
        eprintln!("warning: {w}");
    }
    Ok(data)
}

fn out_dir(c: &RunConfig) -> Result<&Path> {
    std::fs::create_dir_all(&c.output_dir).map_err(|e| Error::io(&c.output_dir, e))?;
    Ok(&c.output_dir)
}

fn echo(command: &str, c: &RunConfig, extra: Value) -> Result<Value> {
    let mut report = json!({ "command": command, "config": c });
    if let (Value::Object(r), Value::Object(e)) = (&mut report, extra) {
        r.extend(e);
    }
    Ok(report)
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value"));
}

fn validate(c: &RunConfig) -> Result<()> {
    let data = load(c)?;
    let dir = out_dir(c)?;
    write_rejects(&dir.join("rejects.csv"), &data.rejects)?;
    let mut by_reason = std::collections::BTreeMap::<&str, usize>::new();
    for r in &data.rejects {
        *by_reason.entry(r.reason.as_str()).or_default() += 1;
    }
    let summary = json!({
        "biography_rows": data.total_rows,
        "rejected_rows": data.rejects.len(),
        "rejects_by_reason": by_reason,
        "biographies_eligible": data.biographies.len(),
        "locations": data.locations.len(),
        "gdp_observations": data.gdp.len(),
        "warnings": data.warnings,
    });
    write_json(&dir.join("run_report.json"), &echo("validate", c, json!({ "summary": summary }))?)?;
    print_json(&summary);
    Ok(())
}

fn features(c: &RunConfig) -> Result<()> {
    let data = load(c)?;
    let dir = out_dir(c)?;
    let grid = PeriodGrid::standard();
    let cache = FeatureCache::build(&data.biographies, &data.locations, &grid, c)?;
    let mut written = Vec::new();
    for (year, f) in &cache.years {
        let name = format!("features_{year}.csv");
        f.matrix.write_csv(&dir.join(&name))?;
        written.push(name);
    }
    let extra = json!({
        "files": written,
        "skipped_years": cache.skipped_years,
        "hpi_clamped": cache.hpi_clamped,
        "feature_flags": cache.flag_totals(),
    });
    write_json(&dir.join("run_report.json"), &echo("features", c, extra)?)?;
    Ok(())
}

fn estimate(c: &RunConfig) -> Result<()> {
    let data = load(c)?;
    let dir = out_dir(c)?;
    let grid = PeriodGrid::standard();
    let cache = FeatureCache::build(&data.biographies, &data.locations, &grid, c)?;
    let run = run_full_with_cache(&data, c, &grid, &cache, true)?;
    write_run_outputs(dir, &run)?;
    write_rejects(&dir.join("rejects.csv"), &data.rejects)?;

    // audit the rescaled regions against their countries
    let years: Vec<i32> = cache.years.keys().copied().collect();
    let proxies = population_proxies(&data.biographies, &data.locations, &years, c.window_years);
    let audit = audit_rescaling(&run.records, &proxies, &data.locations, AUDIT_TOLERANCE)?;
    let mut report = serde_json::to_value(&run.report).map_err(|e| Error::validation(e.to_string()))?;
    report["rescale_audit"] = serde_json::to_value(&audit).map_err(|e| Error::validation(e.to_string()))?;
    write_json(&dir.join("run_report.json"), &report)?;
    if !audit.violations.is_empty() {
        return Err(Error::numerical(format!(
            "rescaling audit: {} country-years off by more than {AUDIT_TOLERANCE:e}",
            audit.violations.len()
        )));
    }
    eprintln!(
        "{} source rows, {} estimates, {} gated",
        run.report.counts.source, run.report.counts.estimate, run.report.counts.gated
    );
    Ok(())
}

fn evaluate(c: &RunConfig) -> Result<()> {
    let data = load(c)?;
    let dir = out_dir(c)?;
    let grid = PeriodGrid::standard();
    let cache = FeatureCache::build(&data.biographies, &data.locations, &grid, c)?;
    let dist = evaluate_models(&data, &cache, &grid, c, c.n_splits, c.seed)?;
    write_evaluation(dir, &dist)?;
    let extra = json!({ "summary": dist.summary });
    write_json(&dir.join("run_report.json"), &echo("evaluate", c, extra)?)?;
    for (split, reason) in &dist.summary.failures {
        eprintln!("split {split} failed: {reason}");
    }
    Ok(())
}

fn explain(c: &RunConfig, permutations: Option<usize>) -> Result<()> {
    let data = load(c)?;
    let dir = out_dir(c)?;
    let grid = PeriodGrid::standard();
    let cache = FeatureCache::build(&data.biographies, &data.locations, &grid, c)?;
    let run = run_full_with_cache(&data, c, &grid, &cache, false)?;
    let mut top = serde_json::Map::new();
    for m in &run.chain.models {
        // the period's labeled rows, explained against themselves
        let attributions = match permutations {
            Some(n) => explain_rows_sampled(
                &m.model,
                &m.training,
                &m.training,
                n,
                histgdp::seed::child_seed(c.seed, &format!("shapley/{}", m.period), 0),
            )?,
            None => explain_rows(&m.model, &m.training, &m.training)?,
        };
        let ranking = rank_features(&attributions)?;
        write_shapley(&dir.join(format!("shapley_{}.csv", m.period)), &attributions)?;
        write_importance(&dir.join(format!("feature_importance_{}.csv", m.period)), &ranking)?;
        top.insert(
            m.period.clone(),
            json!(ranking.iter().take(10).map(|r| r.0.clone()).collect::<Vec<_>>()),
        );
    }
    let extra = json!({
        "method": if permutations.is_some() { "permutation" } else { "exact_linear" },
        "permutations": permutations,
        "top_features": top,
    });
    write_json(&dir.join("run_report.json"), &echo("explain", c, extra)?)?;
    Ok(())
}

fn correlate(c: &RunConfig, estimates: Option<PathBuf>, transform: Transform) -> Result<()> {
    let proxies = load_proxies(required(&c.proxies, "proxies")?)?;
    let path = estimates.unwrap_or_else(|| c.output_dir.join("estimates.csv"));
    let records = read_estimates(&path)?;
    let (transform, transform_name) = match transform {
        Transform::None => (ProxyTransform::None, "none"),
        Transform::Log10 => (ProxyTransform::Log10, "log10"),
    };
    let r = proxy_correlation(&records, &proxies, transform)?;
    let result = serde_json::to_value(&r).map_err(|e| Error::validation(e.to_string()))?;
    let dir = out_dir(c)?;
    write_json(&dir.join("correlation.json"), &result)?;
    let extra = json!({ "estimates": path, "transform": transform_name, "correlation": result });
    write_json(&dir.join("run_report.json"), &echo("correlate", c, extra)?)?;
    print_json(&result);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::validation(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Validate(a) => validate(&a.resolve()?),
        Command::Features(a) => features(&a.resolve()?),
        Command::Estimate(a) => estimate(&a.resolve()?),
        Command::Evaluate(a) => evaluate(&a.resolve()?),
        Command::Explain { common, permutations } => explain(&common.resolve()?, permutations),
        Command::Correlate {
            common,
            estimates,
            transform,
        } => correlate(&common.resolve()?, estimates, transform),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
