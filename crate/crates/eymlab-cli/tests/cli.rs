use std::path::PathBuf;
use std::process::{Command, Output};

use eymlab::algebra::LieAlgebraData;
use eymlab::eym::Kappa;
use eymlab::fields::MetricField;
use eymlab::gauge::ConnectionField;
use eymlab::lattice::Grid;
use eymlab::sampling::{random_form, random_sym};
use eymlab_cli::snapshot::Snapshot;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("eymlab-cli-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_config(name: &str, json: &str) -> PathBuf {
    let path = scratch(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn eymlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eymlab")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn check_value(report: &Value, id: &str) -> f64 {
    report["checks"].as_array().unwrap().iter().find(|c| c["check_id"] == id).unwrap()["value"].as_f64().unwrap()
}

const INSTANTON: &str = r#"{
    "grid": {"n": 4, "size": 4},
    "scenario": {"kind": "u1_flux", "flux": [{"axes": [1, 2], "value": 1.0}, {"axes": [3, 4], "value": -1.0}]},
    "checks": {"trials": 5}
}"#;

#[test]
fn verify_passes_on_the_flat_pair() {
    let out = eymlab(&["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&out);
    assert_eq!(report["pass"], true);
    assert_eq!(report["metadata"]["scenario"], "flat");
    assert!(report["metadata"].get("wall_time_s").is_none());
}

#[test]
fn verify_passes_on_the_instanton() {
    let cfg = write_config("instanton.json", INSTANTON);
    let out = eymlab(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

fn perturbed_snapshot(seed: u64) -> Snapshot {
    let grid = Grid::cubic(3, 8, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u1 = LieAlgebraData::u1();
    let g = MetricField::flat(&grid).perturbed(1.0, &random_sym(&grid, &mut rng, 1, 1e-2)).unwrap();
    let a = random_form(&grid, 1, 1, &mut rng, 1, 1e-2);
    let conn = ConnectionField::with_flux(&grid, &u1, &[(&[0, 1], 0, 0.5)]).unwrap().with_potential(a).unwrap();
    Snapshot { g, conn, kappa: Kappa::Plus }
}

#[test]
fn verify_fails_on_a_perturbed_snapshot() {
    let path = scratch("perturbed.eymf");
    perturbed_snapshot(1).save(&path).unwrap();
    let out = eymlab(&["verify", "--in", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report = json(&out);
    assert!(check_value(&report, "residual.e1_sup") > 1e-6);
    assert_eq!(report["metadata"]["kappa"], 1.0);
}

#[test]
fn snapshot_round_trip_is_exact() {
    let snap = perturbed_snapshot(2);
    let mut bytes = Vec::new();
    snap.write_to(&mut bytes).unwrap();
    assert_eq!(&bytes[..4], b"EYMF");
    let back = Snapshot::read_from(&bytes[..]).unwrap();
    assert_eq!(back, snap);
    // Header: magic, version, n, 3 sizes, 3 lengths, name "u1", d, kappa.
    let header = 4 + 4 + 4 + 3 * 4 + 3 * 8 + 4 + 2 + 4 + 8;
    assert_eq!(bytes.len(), header + 8 * (512 * (6 + 3) + 3));
}

#[test]
fn snapshot_rejects_corrupt_input() {
    let mut bytes = Vec::new();
    perturbed_snapshot(3).write_to(&mut bytes).unwrap();
    assert!(Snapshot::read_from(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(Snapshot::read_from(&extra[..]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Snapshot::read_from(&bad[..]).is_err());

    let path = scratch("bad.eymf");
    std::fs::write(&path, &bad).unwrap();
    assert_eq!(eymlab(&["verify", "--in", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn reverify_after_save_and_load_gives_identical_values() {
    let cfg = write_config("instanton-rt.json", INSTANTON);
    let cfg = cfg.to_str().unwrap();
    let direct = json(&eymlab(&["verify", "--config", cfg]));

    // A flow from a critical pair stops at once, so its snapshot is the scenario point.
    let path = scratch("instanton.eymf");
    let flow = eymlab(&["flow", "--config", cfg, "--out", path.to_str().unwrap()]);
    assert_eq!(flow.status.code(), Some(0));
    let reloaded = json(&eymlab(&["verify", "--config", cfg, "--in", path.to_str().unwrap()]));
    assert_eq!(direct["checks"], reloaded["checks"]);
    assert_eq!(reloaded["metadata"]["scenario"], "file");
}

#[test]
fn verify_reports_are_byte_identical() {
    let cfg = write_config("determinism.json", r#"{"grid": {"n": 3, "size": 6}, "perturbation": {"metric": 1e-3}}"#);
    let args = ["verify", "--config", cfg.to_str().unwrap(), "--seed", "11"];
    let first = eymlab(&args);
    let second = eymlab(&args);
    assert!(!first.stdout.is_empty());
    assert_eq!(first.stdout, second.stdout);
    let other_seed = eymlab(&["verify", "--config", cfg.to_str().unwrap(), "--seed", "12"]);
    assert_ne!(first.stdout, other_seed.stdout);
}

#[test]
fn timing_is_only_reported_on_request() {
    let out = eymlab(&["symbol", "--timing"]);
    assert!(json(&out)["metadata"]["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn flow_from_a_flat_pair_has_one_history_row() {
    let out = eymlab(&["flow"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iter,action,residual_norm,step");
    assert_eq!(lines.len(), 2);
}

#[test]
fn flow_from_a_perturbed_pair_decreases_the_residual() {
    let cfg = write_config("flow.json", r#"{"perturbation": {"metric": 1e-3, "potential": 1e-3}}"#);
    let snap = scratch("flow-out.eymf");
    let out = eymlab(&["flow", "--config", cfg.to_str().unwrap(), "--out", snap.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let residuals: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(residuals.len() > 2);
    assert!(residuals.windows(2).all(|w| w[1] < w[0]));
    assert!(*residuals.last().unwrap() <= 1e-6);
    let end = Snapshot::load(&snap).unwrap();
    assert_eq!(end.g.grid().sizes(), &[8, 8, 8]);
}

#[test]
fn flow_reports_non_convergence_with_exit_one() {
    let cfg = write_config(
        "flow-short.json",
        r#"{"perturbation": {"metric": 1e-3}, "flow": {"max_iter": 2}}"#,
    );
    let out = eymlab(&["flow", "--config", cfg.to_str().unwrap(), "--format", "json"]);
    assert_eq!(out.status.code(), Some(1));
    let body = json(&out);
    assert_eq!(body["converged"], false);
    assert_eq!(body["history"].as_array().unwrap().len(), 3);
}

#[test]
fn invalid_inputs_exit_with_two() {
    let cases = [
        ("zero-step.json", r#"{"flow": {"step": 0.0}}"#, "flow"),
        ("k-zero.json", r#"{"spectrum": {"k": 0}}"#, "spectrum"),
        ("n-five.json", r#"{"grid": {"n": 5}}"#, "symbol"),
        ("unknown-key.json", r#"{"grid": {"n": 3, "depth": 2}}"#, "verify"),
        ("bad-kappa.json", r#"{"kappa": 0.5}"#, "verify"),
        ("bad-algebra.json", r#"{"algebra": "so5"}"#, "verify"),
        ("odd-grid.json", r#"{"grid": {"n": 3, "size": 5}}"#, "verify"),
        ("flux-su2.json", r#"{"algebra": "su2", "scenario": {"kind": "u1_flux", "flux": []}}"#, "verify"),
    ];
    for (name, body, command) in cases {
        let cfg = write_config(name, body);
        let out = eymlab(&[command, "--config", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(eymlab(&["verify", "--config", "/nonexistent/config.json"]).status.code(), Some(2));
}

#[test]
fn spectrum_kernel_matches_the_dense_oracle() {
    let dense = write_config("dense.json", r#"{"grid": {"n": 2, "size": 4}, "spectrum": {"operator": "dense"}}"#);
    let lanczos = write_config(
        "lanczos.json",
        r#"{"grid": {"n": 2, "size": 4}, "spectrum": {"k": 38, "block_size": 4, "max_dim": 80}}"#,
    );
    let d = json(&eymlab(&["spectrum", "--config", dense.to_str().unwrap()]));
    let l = json(&eymlab(&["spectrum", "--config", lanczos.to_str().unwrap()]));
    assert_eq!(d["spectrum"]["kernel_dim"], 32);
    assert_eq!(d["spectrum"]["kernel_dim"], l["spectrum"]["kernel_dim"]);
}

#[test]
fn ambiguous_spectrum_warns_but_succeeds() {
    let cfg = write_config(
        "ambiguous.json",
        r#"{"grid": {"n": 2, "size": 4}, "spectrum": {"operator": "dense", "min_gap": 1e300}}"#,
    );
    let out = eymlab(&["spectrum", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["spectrum"]["ambiguous"], true);
    assert!(String::from_utf8_lossy(&out.stderr).contains("ambiguous"));
}

#[test]
fn symbol_defaults_pass() {
    for n in [3, 4] {
        let cfg = write_config(&format!("symbol{n}.json"), &format!(r#"{{"grid": {{"n": {n}, "size": 4}}}}"#));
        let out = eymlab(&["symbol", "--config", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(check_value(&json(&out), "symbol.inexact_trials"), 0.0);
    }
}

#[test]
fn fdcheck_on_the_flat_pair_reports_second_order() {
    let out = eymlab(&["fdcheck", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let orders: Vec<f64> = text
        .lines()
        .filter(|l| l.starts_with("fd.") && l.contains(".order,"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(orders.len(), 5);
    assert!(orders.iter().all(|o| *o >= 1.9), "{orders:?}");
}

#[test]
fn out_flag_writes_the_report_to_a_file() {
    let path = scratch("report.csv");
    let out = eymlab(&["symbol", "--format", "csv", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("check_id,value,tolerance,bound,pass"));
}

#[test]
fn threads_flag_does_not_change_the_report() {
    let cfg = write_config("threads.json", r#"{"grid": {"n": 3, "size": 6}, "perturbation": {"metric": 1e-3}}"#);
    let cfg = cfg.to_str().unwrap();
    let one = eymlab(&["verify", "--config", cfg, "--threads", "1"]);
    let four = eymlab(&["verify", "--config", cfg, "--threads", "4"]);
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(eymlab(&["verify", "--threads", "0"]).status.code(), Some(2));
}
