use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = r#"{
  "schema": 1,
  "problem": {"initial_state": "ho0"},
  "ansatz": {"layers": 1, "width_1e": 4, "width_2e": 2, "determinants": 1, "phase_hidden": 4, "envelope_hidden": 2},
  "horizon": 0.5,
  "schedule": {"kind": "uniform", "intervals": 2},
  "train": {
    "adam": {"steps": 12, "warmup_steps": 2, "n_slices": 2, "walkers_per_slice": 16},
    "lbfgs": {"outer_rounds": 1, "steps_per_round": 3},
    "sampler": {"burn_in": 20, "thinning": 2},
    "initial_points": 16,
    "boundary_points": 16,
    "convergence_gate": 1000.0
  },
  "metrics": [
    {"kind": "rel_l2"},
    {"kind": "observable", "observable": "monopole", "times": [0.0, 0.4], "samples": 200}
  ],
  "seed": 3
}"#;

fn tdse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdse"))
        .args(args)
        .env("TDSE_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("run.json");
    fs::write(&p, text).unwrap();
    p
}

fn train_into(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    tdse(&args)
}

/// Loss columns of the log, without wall times.
fn losses(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("train_log.csv"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').take(9).collect::<Vec<_>>().join(","))
        .collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn train_writes_checkpoints_log_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, TINY);
    let out = tmp.path().join("a");
    let o = train_into(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["status"], "complete");
    assert_eq!(m["intervals"].as_array().unwrap().len(), 2);
    for k in 0..2 {
        assert!(out.join(format!("checkpoints/interval_00{k}.json")).exists());
        assert!(out.join(format!("checkpoints/interval_00{k}.bin")).exists());
    }
    let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
    let hash = m["config_hash"].as_str().unwrap();
    assert!(log.starts_with(&format!("# config_hash={hash}\ninterval,stage,step,loss")));
    assert!(losses(&out).len() >= 2 * 12);
    assert!(out.join("metric_0_rel_l2.csv").exists());
    let obs = fs::read_to_string(out.join("metric_1_monopole.csv")).unwrap();
    assert_eq!(obs.lines().count(), 4);
    assert!(m["intervals"][1]["penalties"]["value"].is_number());
}

#[test]
fn same_config_and_seed_reproduce_the_log() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, TINY);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert!(train_into(&cfg, &a, &[]).status.success());
    assert!(train_into(&cfg, &b, &[]).status.success());
    assert_eq!(losses(&a), losses(&b));
    assert!(train_into(&cfg, &c, &["--seed", "4"]).status.success());
    assert_ne!(losses(&a), losses(&c));
    assert_ne!(manifest(&a)["config_hash"], manifest(&c)["config_hash"]);
}

#[test]
fn interrupted_run_resumes_to_the_same_result() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, TINY);
    let (full, cut) = (tmp.path().join("full"), tmp.path().join("cut"));
    assert!(train_into(&cfg, &full, &[]).status.success());
    assert!(train_into(&cfg, &cut, &[]).status.success());

    // roll the second run back to just after its first interval
    let mut m = manifest(&cut);
    m["intervals"].as_array_mut().unwrap().truncate(1);
    m["status"] = "running".into();
    fs::write(cut.join("manifest.json"), serde_json::to_string(&m).unwrap()).unwrap();
    fs::remove_file(cut.join("checkpoints/interval_001.json")).unwrap();

    let o = train_into(&cfg, &cut, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("(1 resumed)"), "{}", stdout(&o));
    assert_eq!(losses(&full), losses(&cut));
    let blob = |d: &Path| fs::read(d.join("checkpoints/interval_001.bin")).unwrap();
    assert_eq!(blob(&full), blob(&cut));
}

#[test]
fn resuming_with_another_config_is_refused() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, TINY);
    let out = tmp.path().join("a");
    assert!(train_into(&cfg, &out, &[]).status.success());
    let o = train_into(&cfg, &out, &["--set", "train.adam.steps=13"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("different config"), "{}", stderr(&o));
}

#[test]
fn invalid_configs_fail_before_any_compute() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, TINY);
    let out = tmp.path().join("never");
    let o = train_into(&cfg, &out, &["--set", "train.weights_first.lambda_r=-1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nonnegative"), "{}", stderr(&o));
    assert!(!out.exists());

    let bad = write_config(&tmp, &TINY.replace("\"horizon\"", "\"horizonn\""));
    let o = train_into(&bad, &out, &[]);
    assert!(!o.status.success());
    let msg = stderr(&o);
    assert!(msg.contains("horizonn") && msg.contains("line 5"), "{msg}");
    assert!(!out.exists());
}

#[test]
fn eval_reports_the_error_and_checks_the_ansatz() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, TINY);
    let out = tmp.path().join("a");
    assert!(train_into(&cfg, &out, &[]).status.success());
    let csv = tmp.path().join("err.csv");
    let o = tdse(&["eval", "--checkpoint", out.to_str().unwrap(), "--oracle", "ho0", "--metric", "rel_l2", "--out", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    let value: f64 = line.trim().strip_prefix("rel_l2,").unwrap().parse().unwrap();
    assert!(value.is_finite() && value >= 0.0);
    assert!(fs::read_to_string(&csv).unwrap().starts_with("# config_hash="));

    // single checkpoint, same answer for its own range
    let ck = out.join("checkpoints/interval_000.json");
    let o = tdse(&["eval", "--checkpoint", ck.to_str().unwrap(), "--oracle", "ho0"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let wide = write_config(&tmp, &TINY.replace("\"width_1e\": 4", "\"width_1e\": 5"));
    let o = tdse(&["eval", "--checkpoint", out.to_str().unwrap(), "--oracle", "ho0", "--config", wide.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("expected"), "{}", stderr(&o));

    let o = tdse(&["eval", "--checkpoint", out.to_str().unwrap(), "--oracle", "fermions2"]);
    assert!(!o.status.success());
    let o = tdse(&["eval", "--checkpoint", out.to_str().unwrap(), "--oracle", "ho0", "--metric", "l1"]);
    assert!(!o.status.success());
}

#[test]
fn observe_oracle_monopole_is_exact() {
    let o = tdse(&["observe", "--observable", "monopole", "--times", "0:0.7853981633974483:3", "--oracle", "fermions2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    let m0 = tdse_core::oracles::monopole_ref(0.0, 2, 1.0, 2.0, 1.0).unwrap();
    assert!((rows[2][1] - 0.25 * m0).abs() < 1e-9);
    for r in &rows {
        let want = tdse_core::oracles::monopole_ref(r[0], 2, 1.0, 2.0, 1.0).unwrap();
        assert!((r[1] - want).abs() < 1e-9 * want);
        assert_eq!(r[2], 0.0);
    }
}

#[test]
fn observe_trained_network_writes_a_csv() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, TINY);
    let out = tmp.path().join("a");
    assert!(train_into(&cfg, &out, &[]).status.success());
    let csv = tmp.path().join("dip.csv");
    let o = tdse(&[
        "observe", "--observable", "overlap", "--times", "0,0.2,0.45", "--checkpoint", out.to_str().unwrap(),
        "--samples", "200", "--out", csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 5);
    // the overlap at t = 0 is exactly one
    let first: Vec<f64> = text.lines().nth(2).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((first[1] - 1.0).abs() < 1e-12 && first[3].abs() < 1e-12);
}

#[test]
fn observe_reports_missing_inputs_cleanly() {
    let o = tdse(&["observe", "--observable", "monopole", "--times", "0:1:3", "--checkpoint", "/nonexistent/run"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("does not exist"), "{}", stderr(&o));
    let o = tdse(&["observe", "--observable", "quadrupole", "--times", "0", "--oracle", "ho0"]);
    assert!(!o.status.success());
    let o = tdse(&["observe", "--observable", "monopole", "--times", "0"]);
    assert!(!o.status.success());
}

#[test]
fn selftest_passes_and_prints_json() {
    let o = tdse(&["selftest"]);
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["passed"], true);
    let names: Vec<&str> = v["suites"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["antisymmetry", "derivatives", "ermakov", "oracle_residuals", "estimator"]);
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_tdse"))
        .arg("selftest")
        .env("TDSE_THREADS", "many")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("TDSE_THREADS"));
}
