use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use histgdp::config::RunConfig;
use histgdp::synthetic::{generate, SyntheticSpec};

const BIN: &str = env!("CARGO_BIN_EXE_histgdp");

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let world = generate(&SyntheticSpec { seed: 5, ..SyntheticSpec::default() }, &RunConfig::default()).unwrap();
        world.write_csvs(&dir.path().join("in")).unwrap();
        Self { dir }
    }

    fn input(&self, name: &str) -> PathBuf {
        self.dir.path().join("in").join(name)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Input paths plus a small hyperparameter grid.
    fn args(&self, out: &Path) -> Vec<String> {
        let mut a: Vec<String> = vec![
            "--biographies".into(),
            self.input("biographies.csv").display().to_string(),
            "--locations".into(),
            self.input("locations.csv").display().to_string(),
            "--gdp".into(),
            self.input("gdp.csv").display().to_string(),
            "--output-dir".into(),
            out.display().to_string(),
        ];
        a.extend(
            ["--alpha-grid", "0.5,1", "--n-lambda", "10", "--k-folds", "5", "--bootstrap-b", "50"]
                .iter()
                .map(|s| s.to_string()),
        );
        a
    }
}

fn run(args: &[String]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("run_report.json")).unwrap()).unwrap()
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn help_and_version_succeed() {
    for flag in ["--help", "--version"] {
        let o = run(&strings(&[flag]));
        assert_eq!(o.status.code(), Some(0), "{flag}");
        assert!(!o.stdout.is_empty());
    }
    assert_eq!(run(&strings(&["estimate", "--help"])).status.code(), Some(0));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&strings(&["estimate", "--no-such-flag"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no-such-flag"));
}

#[test]
fn missing_required_path_exits_1() {
    let f = Fixture::new();
    let o = run(&strings(&["validate", "--output-dir", f.out("o").to_str().unwrap()]));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--biographies"));
}

#[test]
fn missing_biographies_file_exits_3_with_path() {
    let f = Fixture::new();
    let mut args = vec!["validate".to_string()];
    args.extend(f.args(&f.out("o")));
    let missing = f.input("nope.csv").display().to_string();
    args[2] = missing.clone();
    let o = run(&args);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains(&missing));
}

#[test]
fn invalid_config_value_exits_1() {
    let f = Fixture::new();
    let mut args = vec!["validate".to_string()];
    args.extend(f.args(&f.out("o")));
    args.extend(strings(&["--ci-level", "1.5"]));
    assert_eq!(run(&args).status.code(), Some(1));
}

#[test]
fn flag_beats_config_beats_default() {
    let f = Fixture::new();
    let cfg = f.out("c.json");
    std::fs::write(&cfg, r#"{"window_years": 120, "seed": 3, "k_folds": 4}"#).unwrap();
    let out = f.out("o");
    let mut args = vec!["validate".to_string()];
    args.extend(f.args(&out));
    args.extend(strings(&["--config", cfg.to_str().unwrap(), "--seed", "9"]));
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let c = &report(&out)["config"];
    assert_eq!(c["seed"], 9); // flag
    assert_eq!(c["window_years"], 120); // config file
    assert_eq!(c["k_folds"], 5); // flag from the fixture overrides the file
    assert_eq!(c["n_splits"], 500); // default
    assert_eq!(c["ci_level"], 0.9);
}

#[test]
fn validate_reports_counts_on_stdout() {
    let f = Fixture::new();
    let out = f.out("o");
    let mut args = vec!["validate".to_string()];
    args.extend(f.args(&out));
    let o = run(&args);
    assert!(o.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["rejected_rows"], 0);
    assert!(out.join("rejects.csv").exists());
    assert_eq!(report(&out)["command"], "validate");
}

#[test]
fn estimate_is_reproducible_and_does_not_touch_inputs() {
    let f = Fixture::new();
    let before = std::fs::read(f.input("gdp.csv")).unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = f.out(name);
        let mut args = vec!["estimate".to_string()];
        args.extend(f.args(&out));
        args.extend(strings(&["--seed", "7"]));
        let o = run(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read(out.join("estimates.csv")).unwrap());
        let r = report(&out);
        assert_eq!(r["rescale_audit"]["violations"].as_array().unwrap().len(), 0);
        assert_eq!(r["config"]["seed"], 7);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(before, std::fs::read(f.input("gdp.csv")).unwrap());
    let text = String::from_utf8(outputs.swap_remove(0)).unwrap();
    assert!(text.starts_with("location_id,year,gdp_pc_2011usd,ci_low,ci_high,kind,gated,rescaled,init_gdp_provenance\n"));
}

#[test]
fn evaluate_writes_one_row_per_split() {
    let f = Fixture::new();
    let out = f.out("o");
    let mut args = vec!["evaluate".to_string()];
    args.extend(f.args(&out));
    args.extend(strings(&["--n-splits", "10"]));
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("evaluation.csv")).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert_eq!(report(&out)["summary"]["n_splits"], 10);
}

#[test]
fn explain_and_correlate() {
    let f = Fixture::new();
    let est = f.out("est");
    let mut args = vec!["estimate".to_string()];
    args.extend(f.args(&est));
    assert!(run(&args).status.success());

    let out = f.out("ex");
    let mut args = vec!["explain".to_string()];
    args.extend(f.args(&out));
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let shap = std::fs::read_to_string(out.join("shapley_late_middle_ages.csv")).unwrap();
    assert!(shap.starts_with("location_id,year,feature,phi,se\n"));
    assert!(out.join("feature_importance_late_middle_ages.csv").exists());

    let proxies = f.out("proxies.csv");
    let mut text = String::from("location_id,year,value\n");
    for (i, line) in std::fs::read_to_string(est.join("estimates.csv")).unwrap().lines().skip(1).enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        let v: f64 = cols[2].parse().unwrap();
        text += &format!("{},{},{}\n", cols[0], cols[1], v.log10() + 0.01 * (i % 3) as f64);
    }
    std::fs::write(&proxies, text).unwrap();
    let out = f.out("cor");
    let mut args = vec!["correlate".to_string()];
    args.extend(f.args(&out));
    args.extend(strings(&[
        "--proxies",
        proxies.to_str().unwrap(),
        "--estimates",
        est.join("estimates.csv").to_str().unwrap(),
    ]));
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["r"].as_f64().unwrap() > 0.99);
}

#[test]
fn correlate_without_proxies_is_a_validation_error() {
    let f = Fixture::new();
    let mut args = vec!["correlate".to_string()];
    args.extend(f.args(&f.out("o")));
    assert_eq!(run(&args).status.code(), Some(1));
}
