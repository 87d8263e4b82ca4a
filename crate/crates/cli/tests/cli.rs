use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn rota3(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rota3"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn field(stdout: &str, key: &str) -> f64 {
    stdout
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
        .parse()
        .unwrap()
}

fn records(dir: &Path) -> Vec<Value> {
    std::fs::read_to_string(dir.join("runs.jsonl"))
        .unwrap_or_default()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn write_json(dir: &Path, name: &str, v: &Value) {
    std::fs::write(dir.join(name), v.to_string()).unwrap();
}

fn toy_config(dir: &Path) {
    write_json(
        dir,
        "toy.json",
        &json!({
            "model": "deterministic_toy",
            "n_obs": 6,
            "params": [
                {"name": "n", "value": 40.0, "transform": "log"},
                {"name": "q", "value": 0.25, "transform": "logit"},
                {"name": "rho", "value": 1.0, "transform": "identity"}
            ]
        }),
    );
}

fn immigration_config(dir: &Path, rho: f64) {
    write_json(
        dir,
        "imm.json",
        &json!({
            "model": "immigration_death",
            "n_obs": 40,
            "params": [
                {"name": "lambda0", "value": 20.0, "transform": "log"},
                {"name": "alpha", "value": 15.0, "transform": "log"},
                {"name": "survival", "value": 0.6, "transform": "logit"},
                {"name": "rho", "value": rho, "transform": "logit"}
            ]
        }),
    );
}

fn rota_config(dir: &Path) -> Value {
    let v: Value = serde_json::from_str(pomp::rota::DEFAULT_CONFIG).unwrap();
    write_json(dir, "rota.json", &v);
    v
}

#[test]
fn simulate_is_reproducible_and_has_the_data_shape() {
    let dir = tempfile::tempdir().unwrap();
    rota_config(dir.path());
    ok(&rota3(dir.path(), &["simulate", "--config", "rota.json", "--out", "a.csv", "--seed", "4"]));
    ok(&rota3(dir.path(), &["simulate", "--config", "rota.json", "--out", "b.csv", "--seed", "4"]));
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 417);
    assert_eq!(lines[0], "time,stratum_1,stratum_2,stratum_3");
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 4));
    assert_eq!(records(dir.path()).len(), 2);
}

#[test]
fn negative_rate_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = rota_config(dir.path());
    for p in v["params"].as_array_mut().unwrap() {
        if p["name"] == "omega" {
            p["transform"] = json!("identity");
            p["value"] = json!(-0.01);
        }
    }
    write_json(dir.path(), "bad.json", &v);
    let out = rota3(dir.path(), &["simulate", "--config", "bad.json", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("omega"));
    assert!(records(dir.path()).is_empty());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rota3(dir.path(), &["filter", "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn filter_echoes_table_settings_in_its_record() {
    let dir = tempfile::tempdir().unwrap();
    toy_config(dir.path());
    ok(&rota3(dir.path(), &["simulate", "--config", "toy.json", "--out", "d.csv"]));
    let stdout = ok(&rota3(
        dir.path(),
        &["filter", "--method", "pf", "--data", "d.csv", "--config", "toy.json", "--particles", "50000", "--replicates", "36"],
    ));
    assert!(stdout.starts_with("loglik="));
    assert_eq!(field(&stdout, "n_params"), 3.0);
    let ll = field(&stdout, "loglik");
    assert!((field(&stdout, "aic") - (-2.0 * ll + 6.0)).abs() < 1e-9);
    let rec = records(dir.path()).pop().unwrap();
    assert_eq!(rec["subcommand"], "filter");
    assert_eq!(rec["config"]["settings"]["filter"]["particles"], 50000);
    assert_eq!(rec["config"]["settings"]["filter"]["replicates"], 36);
    assert_eq!(rec["version"], "v0.1.0");
    assert_eq!(rec["outputs"]["loglik"].as_f64().unwrap(), ll);
}

#[test]
fn deterministic_process_loglik_does_not_depend_on_particles() {
    let dir = tempfile::tempdir().unwrap();
    toy_config(dir.path());
    ok(&rota3(dir.path(), &["simulate", "--config", "toy.json", "--out", "d.csv"]));
    let small = ok(&rota3(dir.path(), &["filter", "--data", "d.csv", "--config", "toy.json", "--particles", "10", "--replicates", "2"]));
    let large = ok(&rota3(dir.path(), &["filter", "--data", "d.csv", "--config", "toy.json", "--particles", "1000", "--replicates", "2"]));
    assert_eq!(field(&small, "loglik"), field(&large, "loglik"));
}

#[test]
fn pal_replication_request_warns_and_runs_once() {
    let dir = tempfile::tempdir().unwrap();
    toy_config(dir.path());
    ok(&rota3(dir.path(), &["simulate", "--config", "toy.json", "--out", "d.csv"]));
    let out = rota3(dir.path(), &["filter", "--method", "pal", "--data", "d.csv", "--config", "toy.json", "--replicates", "36"]);
    let stdout = ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("replication is unnecessary for PAL"));
    let again = ok(&rota3(dir.path(), &["filter", "--method", "pal", "--data", "d.csv", "--config", "toy.json"]));
    assert_eq!(field(&stdout, "loglik"), field(&again, "loglik"));
}

#[test]
fn pal_on_a_simulator_only_model_explains_itself() {
    let dir = tempfile::tempdir().unwrap();
    write_json(
        dir.path(),
        "hmm.json",
        &json!({
            "model": "hmm2",
            "n_obs": 10,
            "params": [
                {"name": "p01", "value": 0.2, "transform": "logit"},
                {"name": "p10", "value": 0.3, "transform": "logit"},
                {"name": "e0", "value": 0.1, "transform": "logit"},
                {"name": "e1", "value": 0.8, "transform": "logit"},
                {"name": "pi1", "value": 0.5, "transform": "logit"}
            ]
        }),
    );
    ok(&rota3(dir.path(), &["simulate", "--config", "hmm.json", "--out", "d.csv"]));
    let out = rota3(dir.path(), &["filter", "--method", "pal", "--data", "d.csv", "--config", "hmm.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("analytic model structure") && err.contains("particle filter"), "{err}");

    std::fs::write(dir.path().join("bad.csv"), "time,y\n1,3\n2,1\n").unwrap();
    let out = rota3(dir.path(), &["filter", "--data", "bad.csv", "--config", "hmm.json", "--particles", "20", "--replicates", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("loglik=-inf"));
}

#[test]
fn compare_on_the_deterministic_toy_agrees_exactly() {
    let dir = tempfile::tempdir().unwrap();
    toy_config(dir.path());
    ok(&rota3(
        dir.path(),
        &["compare", "--config", "toy.json", "--n-datasets", "1", "--particles", "50", "--replicates", "2", "--out", "cmp"],
    ));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cmp.json")).unwrap()).unwrap();
    let pair = &summary["pairs"][0];
    assert_eq!(pair["pf_loglik"], pair["pal_loglik"]);
    assert_eq!(summary["disqualified"], 0);
    let csv = std::fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "dataset,pf_loglik,pal_loglik");
}

#[test]
fn compare_svg_has_one_point_per_dataset_and_one_reference_line() {
    let dir = tempfile::tempdir().unwrap();
    immigration_config(dir.path(), 0.4);
    let stdout = ok(&rota3(
        dir.path(),
        &["compare", "--config", "imm.json", "--n-datasets", "7", "--particles", "200", "--replicates", "2", "--out", "cmp"],
    ));
    assert!(stdout.contains("mean_gap="));
    let svg = std::fs::read_to_string(dir.path().join("cmp.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 7);
    assert_eq!(svg.matches("<line").count(), 1);
    assert!(svg.contains(r#"width="600" height="600""#));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cmp.json")).unwrap()).unwrap();
    let pairs = summary["pairs"].as_array().unwrap();
    let gaps: Vec<f64> = pairs
        .iter()
        .map(|p| p["pf_loglik"].as_f64().unwrap() - p["pal_loglik"].as_f64().unwrap())
        .collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!((summary["mean_gap"].as_f64().unwrap() - mean).abs() < 1e-9);
}

#[test]
fn zero_random_walk_mif_returns_its_input() {
    let dir = tempfile::tempdir().unwrap();
    immigration_config(dir.path(), 0.4);
    ok(&rota3(dir.path(), &["simulate", "--config", "imm.json", "--out", "d.csv"]));
    write_json(dir.path(), "search.json", &json!({"rw_sd": {"rho": 0.0}, "iterations": 2, "particles": 100, "replicates": 2}));
    ok(&rota3(dir.path(), &["mif", "--data", "d.csv", "--config", "imm.json", "--search", "search.json", "--out", "fit.json"]));
    let fit: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    let cfg: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("imm.json")).unwrap()).unwrap();
    assert_eq!(fit, cfg["params"]);
}

#[test]
fn mif_improves_on_its_start() {
    let dir = tempfile::tempdir().unwrap();
    immigration_config(dir.path(), 0.4);
    ok(&rota3(dir.path(), &["simulate", "--config", "imm.json", "--out", "d.csv", "--seed", "3"]));
    immigration_config(dir.path(), 0.15);
    ok(&rota3(dir.path(), &["filter", "--data", "d.csv", "--config", "imm.json", "--particles", "1000", "--replicates", "4"]));
    write_json(dir.path(), "search.json", &json!({"rw_sd": {"rho": 0.1}, "iterations": 20, "particles": 500, "replicates": 4}));
    ok(&rota3(
        dir.path(),
        &["mif", "--data", "d.csv", "--config", "imm.json", "--search", "search.json", "--out", "fit.json", "--trace", "trace.csv"],
    ));
    let recs = records(dir.path());
    let start = recs[recs.len() - 2]["outputs"]["loglik"].as_f64().unwrap();
    let fin = recs[recs.len() - 1]["outputs"]["loglik"].as_f64().unwrap();
    assert!(fin >= start, "{fin} < {start}");
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 21);
}

#[test]
fn cgd_without_free_parameters_matches_filter() {
    let dir = tempfile::tempdir().unwrap();
    immigration_config(dir.path(), 0.4);
    ok(&rota3(dir.path(), &["simulate", "--config", "imm.json", "--out", "d.csv"]));
    write_json(dir.path(), "search.json", &json!({"free": []}));
    let cgd = ok(&rota3(dir.path(), &["cgd", "--data", "d.csv", "--config", "imm.json", "--search", "search.json", "--out", "fit.json"]));
    let filter = ok(&rota3(dir.path(), &["filter", "--method", "pal", "--data", "d.csv", "--config", "imm.json"]));
    assert_eq!(field(&cgd, "aic"), field(&filter, "aic"));
    let fit: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    let cfg: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("imm.json")).unwrap()).unwrap();
    assert_eq!(fit, cfg["params"]);
}

#[test]
fn benchmark_orders_zero_zero_counts_two_parameters_per_column() {
    let dir = tempfile::tempdir().unwrap();
    rota_config(dir.path());
    ok(&rota3(dir.path(), &["simulate", "--config", "rota.json", "--out", "d.csv", "--n-obs", "60"]));
    let stdout = ok(&rota3(dir.path(), &["benchmark", "--data", "d.csv", "--orders", "0,0", "--out", "b.csv"]));
    assert_eq!(field(&stdout, "n_params"), 6.0);
    let report = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert!(report.starts_with("column,loglik_transformed,jacobian,loglik_natural,n_params\n"));
    assert!(report.lines().filter(|l| l.starts_with("stratum_")).all(|l| l.ends_with(",2")));
    let out = rota3(dir.path(), &["benchmark", "--data", "d.csv", "--orders", "two"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn anomaly_report_from_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("time,cond_loglik,ess\n");
    for t in 1..=60 {
        let v = if t <= 3 { -400.0 } else { -5.0 - 0.01 * (t % 7) as f64 };
        csv.push_str(&format!("{t},{v},100\n"));
    }
    std::fs::write(dir.path().join("diag.csv"), csv).unwrap();
    let stdout = ok(&rota3(dir.path(), &["anomaly", "--diagnostics", "diag.csv", "--window", "10", "--out", "a.json"]));
    assert!(stdout.contains("concentrated_early=true"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(report["flagged"], json!([0, 1, 2]));
    let out = rota3(dir.path(), &["anomaly", "--diagnostics", "diag.csv", "--window", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn every_record_can_be_rerun() {
    let dir = tempfile::tempdir().unwrap();
    immigration_config(dir.path(), 0.4);
    ok(&rota3(dir.path(), &["simulate", "--config", "imm.json", "--out", "d.csv", "--seed", "8"]));
    ok(&rota3(dir.path(), &["filter", "--data", "d.csv", "--config", "imm.json", "--particles", "300", "--replicates", "3", "--diagnostics", "diag.csv", "--seed", "8"]));
    ok(&rota3(dir.path(), &["anomaly", "--diagnostics", "diag.csv", "--window", "5"]));
    ok(&rota3(dir.path(), &["benchmark", "--data", "d.csv", "--orders", "1,0"]));
    let n = records(dir.path()).len();
    assert_eq!(n, 4);
    // The rerun must not depend on the original files.
    for f in ["imm.json", "d.csv", "diag.csv"] {
        std::fs::remove_file(dir.path().join(f)).unwrap();
    }
    for i in 0..n {
        let outdir = dir.path().join(format!("rerun{i}"));
        let stdout = ok(&rota3(
            dir.path(),
            &["rerun", "--index", &i.to_string(), "--outdir", outdir.to_str().unwrap()],
        ));
        assert!(stdout.contains("reproduced=true"), "{stdout}");
    }
    let recs = records(dir.path());
    assert_eq!(recs.len(), 2 * n);
    assert!(recs[n..].iter().all(|r| r["subcommand"] == "rerun"));
}
