//! End-to-end tests of the `demandsim` binary: output formats, exit codes,
//! and byte determinism of the CSV artifacts.

use std::path::PathBuf;
use std::process::{Command, Output};

fn demandsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_demandsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

fn temp_path(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("demandsim_cli_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_config(name: &str, body: &str) -> PathBuf {
    let path = temp_path(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SINGLE_CELL: &str = r#"{
    "cases": [{"f1": 2.0, "mse1": 4.0}],
    "alphas": [0.1],
    "lead_times": [1],
    "penalties": [19.0],
    "holding_cost": 1.0,
    "methods": ["s1a"],
    "reps": 5,
    "horizon": 20,
    "master_seed": 9
}"#;

#[test]
fn fit_prints_class_and_verified_moments() {
    let out = demandsim(&["fit", "--mean", "10", "--var", "60"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("class: negbin_mixture"), "{text}");
    assert!(text.contains("k: 2"));
    assert!(text.contains("mean: 10"));
    assert!(text.contains("variance: 60"));
}

#[test]
fn fit_json_is_parseable_and_ordered() {
    let out = demandsim(&["fit", "--mean", "2", "--var", "2", "--json"]);
    assert!(out.status.success());
    let value: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(value["class"], "poisson");
    assert_eq!(value["lambda"], 2.0);
    assert_eq!(value["mean"], 2.0);
    let text = stdout(&out);
    assert!(text.find("class").unwrap() < text.find("lambda").unwrap());
}

#[test]
fn fit_rejects_infeasible_moments_with_exit_2() {
    let out = demandsim(&["fit", "--mean", "0.5", "--var", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn generate_is_byte_deterministic() {
    let args = [
        "generate", "--f1", "10", "--mse1", "60", "--alpha", "0.05", "--horizon", "50",
        "--paths", "3", "--seed", "11",
    ];
    let a = demandsim(&args);
    let b = demandsim(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.starts_with("path_id,t,demand,mu,sigma2,a,class\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 50);
}

#[test]
fn generate_rejects_infeasible_start_with_exit_2() {
    let out = demandsim(&["generate", "--f1", "0.5", "--mse1", "0.1", "--alpha", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_with_unequal_smoothing_can_fail_at_runtime() {
    // Bin(1, 0.25) with beta > alpha breaks on the first zero draw; with 20
    // paths of 50 periods a zero draw is certain.
    let out = demandsim(&[
        "generate", "--f1", "0.25", "--mse1", "0.1875", "--alpha", "0.05", "--beta", "0.2",
        "--horizon", "50", "--paths", "20", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains("infeasible"), "{err}");
}

#[test]
fn experiment_writes_results_csv() {
    let config = write_config("experiment.json", SINGLE_CELL);
    let out_dir = temp_path("experiment_out");
    let out = demandsim(&[
        "experiment",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "case_f1,case_mse1,alpha,lead_time,penalty,target_p1,method,avg_cost,avg_cost_se,\
         fill_rate,fill_rate_se,in_stock,in_stock_se,avg_on_hand,avg_on_hand_se,\
         reps,horizon,warmup,seed"
    );
    assert_eq!(lines.count(), 1);
}

#[test]
fn simulate_writes_period_records_for_a_single_cell() {
    let config = write_config("simulate.json", SINGLE_CELL);
    let records = temp_path("records.csv");
    let out = demandsim(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        records.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&records).unwrap();
    assert!(csv.starts_with("rep_id,t,d,d_s,q,I,b,cost,stockout\n"));
    assert_eq!(csv.lines().count(), 1 + 5 * 20);
}

#[test]
fn simulate_rejects_multi_cell_configs() {
    let config = write_config(
        "multi.json",
        &SINGLE_CELL.replace("[19.0]", "[9.0, 19.0]"),
    );
    let records = temp_path("never_written.csv");
    let out = demandsim(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        records.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!records.exists());
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let config = write_config(
        "unknown.json",
        &SINGLE_CELL.replace("\"master_seed\": 9", "\"master_seed\": 9, \"bogus\": 1"),
    );
    let out = demandsim(&["experiment", "--config", config.to_str().unwrap(), "--out", "/tmp"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn missing_config_file_is_a_runtime_error() {
    let out = demandsim(&["experiment", "--config", "/nonexistent.json", "--out", "/tmp"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bias_check_emits_the_comparison_table() {
    let out = demandsim(&[
        "bias-check", "--f1", "2", "--sigma", "2", "--alpha", "0.1", "--paths", "200",
        "--horizon", "5", "--seed", "3",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("t,dgp_mean,arima_mean,dgp_se,arima_se\n"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn thread_override_does_not_change_output() {
    let args = [
        "generate", "--f1", "2", "--mse1", "4", "--alpha", "0.1", "--horizon", "20",
        "--paths", "8", "--seed", "5",
    ];
    let single = Command::new(env!("CARGO_BIN_EXE_demandsim"))
        .args(args)
        .env("DEMANDSIM_THREADS", "1")
        .output()
        .unwrap();
    let many = Command::new(env!("CARGO_BIN_EXE_demandsim"))
        .args(args)
        .env("DEMANDSIM_THREADS", "8")
        .output()
        .unwrap();
    assert!(single.status.success());
    assert_eq!(single.stdout, many.stdout);
}
