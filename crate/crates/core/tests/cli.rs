use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use epiforecast::cli::Manifest;
use epiforecast::neuralnet::{Network, Tensor};
use epiforecast::tuning::{AssignmentObjective, HashSurrogate, HyperparamSpace, TuningResult};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_epiforecast");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("EPIFORECAST_CONFIG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

/// Smooth single-variable series with two missing dates.
fn gapped_csv(days: usize) -> String {
    let mut s = String::from("date,cases\n");
    let start = chrono::NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
    for t in 0..days {
        if t == 10 || t == 25 {
            continue;
        }
        let v = 1000.0 / (1.0 + (-(t as f64 - 30.0) / 8.0).exp());
        s.push_str(&format!("{},{:.1}\n", start + chrono::Days::new(t as u64), v));
    }
    s
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new(csv: &str) -> Fixture {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("data.csv"), csv).unwrap();
        let config = serde_json::json!({
            "data": {"path": "data.csv", "region": "test", "variables": ["cases"]},
            "tuning": {"population_size": 4, "max_iterations": 2, "budget": 4, "fitness_epochs": 2},
            "training": {"epochs": 5},
            "forecast_steps": 5,
            "output_dir": "out",
            "seed": 1
        });
        fs::write(dir.path().join("config.json"), config.to_string()).unwrap();
        Fixture { dir }
    }

    fn config(&self) -> String {
        self.dir.path().join("config.json").display().to_string()
    }

    /// Runs a subcommand with the fixture config and extra flags.
    fn cmd(&self, sub: &str, extra: &[&str]) -> String {
        let cfg = self.config();
        let mut args = vec!["--config", cfg.as_str(), sub];
        args.extend_from_slice(extra);
        ok(&args)
    }

    fn run_dir(&self) -> PathBuf {
        let out = self.dir.path().join("out");
        let mut dirs: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
        assert_eq!(dirs.len(), 1, "one run directory");
        dirs.pop().unwrap()
    }

    fn read(&self, name: &str) -> Vec<u8> {
        fs::read(self.run_dir().join(name)).unwrap()
    }
}

#[test]
fn ingest_reports_imputed_gaps() {
    let fx = Fixture::new(&gapped_csv(60));
    let out = fx.cmd("ingest", &[]);
    assert!(out.contains("imputed: 2"), "{out}");
    assert!(out.contains("gaps: 2"), "{out}");
    assert!(out.contains("rows: 60"), "{out}");
}

#[test]
fn ingest_is_idempotent_and_leaves_input_alone() {
    let csv = gapped_csv(60);
    let fx = Fixture::new(&csv);
    fx.cmd("ingest", &[]);
    let first = (fx.read("dataset.csv"), fx.read("preprocessing.json"), fx.read("manifest.json"));
    fx.cmd("ingest", &[]);
    let second = (fx.read("dataset.csv"), fx.read("preprocessing.json"), fx.read("manifest.json"));
    assert_eq!(first, second);
    assert_eq!(fs::read_to_string(fx.dir.path().join("data.csv")).unwrap(), csv);
}

#[test]
fn clean_input_reingests_identically() {
    let csv: String = std::iter::once("date,cases\n".to_string())
        .chain((0..40).map(|t| format!("2021-02-{:02},{}\n", 1 + t % 28, t)).take(28))
        .collect();
    let fx = Fixture::new(&csv);
    let a = fx.cmd("ingest", &[]);
    assert!(a.contains("imputed: 0"), "{a}");
    let bytes = fx.read("dataset.csv");
    fx.cmd("ingest", &[]);
    assert_eq!(bytes, fx.read("dataset.csv"));
}

#[test]
fn malformed_date_names_row() {
    let fx = Fixture::new("date,cases\n2021-01-01,1\n2021-01-02,2\n2021/01/03,3\n");
    let cfg = fx.config();
    let o = run(&["--config", &cfg, "ingest"]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("row 4"), "{err}");
    assert!(err.contains("2021/01/03"), "{err}");
}

#[test]
fn config_errors_exit_two() {
    assert_eq!(run(&["ingest"]).status.code(), Some(2));
    let fx = Fixture::new(&gapped_csv(60));
    let cfg = fx.config();
    assert_eq!(run(&["--config", &cfg, "ingest", "--split-ratio", "1.5"]).status.code(), Some(2));
    assert_eq!(run(&["--config", &cfg, "forecast", "--steps", "0"]).status.code(), Some(2));
    assert_eq!(run(&["--config", &cfg, "tune", "--algorithm", "pso"]).status.code(), Some(2));
    fs::write(fx.dir.path().join("bad.json"), r#"{"data": {"path": "data.csv", "variables": ["cases"]}}"#).unwrap();
    let bad = fx.dir.path().join("bad.json").display().to_string();
    let o = run(&["--config", &bad, "ingest"]);
    assert_eq!(o.status.code(), Some(2), "missing seed is a config error");
}

#[test]
fn config_path_from_environment() {
    let fx = Fixture::new(&gapped_csv(60));
    let o = Command::new(BIN)
        .arg("ingest")
        .env("EPIFORECAST_CONFIG", fx.config())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn missing_artifacts_are_data_errors() {
    let fx = Fixture::new(&gapped_csv(60));
    let cfg = fx.config();
    assert_eq!(run(&["--config", &cfg, "tune"]).status.code(), Some(3));
    fx.cmd("ingest", &[]);
    assert_eq!(run(&["--config", &cfg, "forecast"]).status.code(), Some(3));
    assert_eq!(run(&["--config", &cfg, "evaluate"]).status.code(), Some(3));
}

#[test]
fn tune_is_deterministic() {
    let fx = Fixture::new(&gapped_csv(60));
    fx.cmd("ingest", &[]);
    let flags = ["--algorithm", "rs-gwo-woa", "--seed", "1"];
    fx.cmd("tune", &flags);
    let first = (fx.read("tuning-cases.json"), fx.read("trace-cases.csv"));
    fx.cmd("tune", &flags);
    assert_eq!(first, (fx.read("tuning-cases.json"), fx.read("trace-cases.csv")));
}

#[test]
fn tune_records_algorithm() {
    let fx = Fixture::new(&gapped_csv(60));
    fx.cmd("ingest", &[]);
    fx.cmd("tune", &["--algorithm", "ga", "--surrogate", "hash"]);
    let report: TuningResult = serde_json::from_slice(&fx.read("tuning-cases.json")).unwrap();
    assert_eq!(report.algorithm.to_string(), "ga");
    let text = String::from_utf8(fx.read("tuning-cases.json")).unwrap();
    assert!(text.contains("\"algorithm\": \"ga\""), "{text}");
}

#[test]
fn surrogate_tune_matches_enumeration() {
    let fx = Fixture::new(&gapped_csv(60));
    for seed in [1u64, 5] {
        let s = seed.to_string();
        // the seed is part of the run key, so each seed gets its own ingest
        fx.cmd("ingest", &["--seed", &s]);
        fx.cmd(
            "tune",
            &["--surrogate", "hash", "--budget", "200", "--population", "30", "--iterations", "200", "--seed", &s],
        );
        let report: TuningResult = serde_json::from_slice(
            &fs::read(
                fs::read_dir(fx.dir.path().join("out"))
                    .unwrap()
                    .map(|e| e.unwrap().path())
                    .find(|p| {
                        let m: Manifest = serde_json::from_slice(&fs::read(p.join("manifest.json")).unwrap()).unwrap();
                        m.seed == seed
                    })
                    .unwrap()
                    .join("tuning-cases.json"),
            )
            .unwrap(),
        )
        .unwrap();
        let surrogate = HashSurrogate { seed };
        let oracle = HyperparamSpace::default()
            .enumerate()
            .into_iter()
            .min_by(|a, b| surrogate.loss(a).total_cmp(&surrogate.loss(b)))
            .unwrap();
        assert_eq!(report.best.indices, oracle.indices, "seed {seed}");
    }
}

fn read_forecast(path: &Path) -> Vec<(String, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (d, v) = l.split_once(',').unwrap();
            (d.to_string(), v.parse().unwrap())
        })
        .collect()
}

#[test]
fn forecast_rows_and_dates() {
    let fx = Fixture::new(&gapped_csv(60));
    fx.cmd("ingest", &[]);
    fx.cmd("train", &[]);
    fx.cmd("forecast", &["--steps", "9"]);
    let rows = read_forecast(&fx.run_dir().join("forecast-cases.csv"));
    assert_eq!(rows.len(), 9);
    assert_eq!(rows[0].0, "2021-03-02");
    assert_eq!(rows[8].0, "2021-03-10");
    assert!(rows.iter().all(|(_, v)| v.is_finite()));
}

#[test]
fn one_step_forecast_is_last_window_prediction() {
    let fx = Fixture::new(&gapped_csv(60));
    fx.cmd("ingest", &[]);
    fx.cmd("train", &[]);
    fx.cmd("forecast", &["--steps", "1"]);
    let rows = read_forecast(&fx.run_dir().join("forecast-cases.csv"));
    assert_eq!(rows.len(), 1);

    let net = Network::load(fx.run_dir().join("model-cases.json")).unwrap();
    let pre: serde_json::Value = serde_json::from_slice(&fx.read("preprocessing.json")).unwrap();
    let min = pre["scaling"]["cases"]["min"].as_f64().unwrap();
    let max = pre["scaling"]["cases"]["max"].as_f64().unwrap();
    let scaled: Vec<f64> = String::from_utf8(fx.read("dataset.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let window = &scaled[scaled.len() - net.config.lookback..];
    let y = net.forward(&Tensor::column(window).unwrap()).unwrap()[0];
    let expected = min + y * (max - min);
    assert!((rows[0].1 - expected).abs() <= 1e-9 * expected.abs().max(1.0), "{} vs {expected}", rows[0].1);
}

#[test]
fn forecast_survives_model_round_trip() {
    use epiforecast::cli::pipeline::{forecast_series, train_series, PreparedSeries};
    use epiforecast::cli::RunConfig;

    let fx = Fixture::new(&gapped_csv(60));
    fx.cmd("ingest", &[]);
    fx.cmd("train", &[]);
    fx.cmd("forecast", &[]);
    let on_disk = read_forecast(&fx.run_dir().join("forecast-cases.csv"));

    let cfg = RunConfig::load(Path::new(&fx.config())).unwrap();
    let ds = epiforecast::timeseries::load_csv(
        &cfg.data.path,
        &epiforecast::timeseries::CsvSchema::new("test", "date", &["cases"]),
    )
    .unwrap()
    .imputed()
    .unwrap();
    let series = PreparedSeries::new("cases", ds.variable("cases").unwrap(), cfg.split_ratio).unwrap();
    let net = train_series(
        &series,
        &cfg.base_network(),
        &cfg.final_training(cfg.seed),
        &cfg.explicit_assignment(),
        cfg.seed,
    )
    .unwrap();
    let in_memory = forecast_series(&net, &series, cfg.forecast_steps).unwrap();
    assert_eq!(on_disk.len(), in_memory.len());
    for ((_, a), b) in on_disk.iter().zip(&in_memory) {
        assert_eq!(a, b);
    }
    let loaded = Network::load(fx.run_dir().join("model-cases.json")).unwrap();
    assert_eq!(loaded, net);
}

#[test]
fn evaluate_writes_reports() {
    let fx = Fixture::new(&gapped_csv(60));
    fx.cmd("ingest", &[]);
    fx.cmd("train", &[]);
    let out = fx.cmd("evaluate", &[]);
    assert!(out.contains("persistence"), "{out}");
    let report: serde_json::Value = serde_json::from_slice(&fx.read("evaluation-cases.json")).unwrap();
    assert_eq!(report["model"]["scaled"]["n"], 12);
    let preds = String::from_utf8(fx.read("predictions-cases.csv")).unwrap();
    assert_eq!(preds.lines().count(), 13);
    let manifest: Manifest = serde_json::from_slice(&fx.read("manifest.json")).unwrap();
    for name in ["dataset.csv", "model-cases.json", "evaluation-cases.json", "predictions-cases.csv"] {
        assert!(manifest.artifacts.contains_key(name), "{name}");
    }
}

fn six_methods_24_tests() -> String {
    let mut s = String::from("test,M1,M2,M3,M4,M5,M6\n");
    for t in 0..24 {
        let row: Vec<String> = (0..6).map(|m| format!("{}", ((m * 7 + t * 3) % 11) as f64 + m as f64 * 0.1)).collect();
        s.push_str(&format!("T{t},{}\n", row.join(",")));
    }
    s
}

#[test]
fn compare_uses_supplied_q() {
    let dir = TempDir::new().unwrap();
    let scores = dir.path().join("scores.csv");
    fs::write(&scores, six_methods_24_tests()).unwrap();
    let out = dir.path().join("cmp");
    let text = ok(&["compare", "--scores", scores.to_str().unwrap(), "--q", "2.728", "--out", out.to_str().unwrap()]);
    assert!(text.contains("critical difference: 1.47"), "{text}");
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    let cd = result["critical_difference"].as_f64().unwrap();
    assert!((cd - 1.474).abs() <= 1e-3, "{cd}");
    let csv = fs::read_to_string(out.join("cd_diagram.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn compare_flags_dominant_pair() {
    let dir = TempDir::new().unwrap();
    let scores = dir.path().join("scores.csv");
    let mut s = String::from("test,good,bad\n");
    for t in 0..12 {
        s.push_str(&format!("T{t},{},{}\n", 0.1 + t as f64, 5.0 + t as f64));
    }
    fs::write(&scores, s).unwrap();
    let out = dir.path().join("cmp");
    ok(&["compare", "--scores", scores.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    // ranks 1 and 2 everywhere; q(2, 0.05) = 1.960, CD = 1.960 * sqrt(2*3/(6*12)) = 0.5658
    let cd = result["critical_difference"].as_f64().unwrap();
    assert!((cd - 1.960 * (6.0f64 / 72.0).sqrt()).abs() < 1e-9, "{cd}");
    assert_eq!(result["significant"][0][1], true);
    assert_eq!(result["significant"][1][0], true);
}

#[test]
fn compare_rejects_empty_csv() {
    let dir = TempDir::new().unwrap();
    let scores = dir.path().join("empty.csv");
    fs::write(&scores, "").unwrap();
    let o = run(&["compare", "--scores", scores.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    assert!(!dir.path().join("comparison.json").exists());
}

#[test]
fn bench_opt_writes_trace() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = ok(&[
        "bench-opt", "--function", "sphere", "--dim", "3", "--population", "10", "--iterations", "30", "--seed", "2",
        "--trace", trace.to_str().unwrap(),
    ]);
    assert!(out.contains("best fitness"), "{out}");
    let lines: Vec<String> = fs::read_to_string(&trace).unwrap().lines().map(String::from).collect();
    assert_eq!(lines[0], "iteration,best_fitness");
    assert_eq!(lines.len(), 31);
    assert_eq!(run(&["bench-opt", "--function", "himmelblau"]).status.code(), Some(2));
}
