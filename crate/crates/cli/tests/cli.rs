use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use mvdlmc_cli::artifact::read_control;
use mvdlmc_cli::config::RunConfig;

fn mvdlmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvdlmc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_ok(args: &[&str]) -> String {
    let out = mvdlmc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn strip_wall_time(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("wall_time");
            m.values_mut().for_each(strip_wall_time);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_wall_time),
        _ => {}
    }
}

const SMALL_RARE: &str = r#"
[model]
decoupled_initial_law = { kind = "constant", value = 0.0 }

[observable]
name = "indicator"
threshold = 2.0

[grid]
dx = 0.05

[control]
particles = 100
steps = 20

[estimate]
particles = 10
n1 = 8
n2 = 8
m1 = 20
m2 = [10, 40]
"#;

#[test]
fn constant_observable_gives_a_zero_control() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[observable]\nname = \"constant\"\nvalue = 3.0\n[grid]\ndx = 0.05\n[control]\nparticles = 20\nsteps = 10\n",
    );
    let out = dir.path().join("out");
    run_ok(&["solve-control", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let loaded = RunConfig::load(&cfg).unwrap();
    let zeta = read_control(&out.join("control.bin"), &loaded).unwrap();
    assert!(zeta.values().iter().all(|&z| z == 0.0));
}

#[test]
fn rare_event_artifact_loads_and_is_finite() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "r.toml", SMALL_RARE);
    let out = dir.path().join("out");
    run_ok(&["solve-control", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let zeta = read_control(&out.join("control.bin"), &RunConfig::load(&cfg).unwrap()).unwrap();
    assert!(zeta.values().iter().all(|z| z.is_finite()));
    assert!(zeta.max_abs() > 0.0);
}

#[test]
fn artifact_for_another_model_is_refused() {
    let dir = TempDir::new().unwrap();
    let artifact = dir.path().join("control.bin");
    let with_artifact = SMALL_RARE.replace(
        "[control]\n",
        &format!("[control]\nartifact = {:?}\n", artifact.to_str().unwrap()),
    );
    let cfg_a = write_config(dir.path(), "a.toml", &with_artifact);
    run_ok(&["solve-control", "--config", cfg_a.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    // same model loads
    run_ok(&["estimate", "--config", cfg_a.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);

    let other = with_artifact.replace("[model]\n", "[model]\nsigma = 0.5\n");
    let cfg_b = write_config(dir.path(), "b.toml", &other);
    let out = mvdlmc(&["estimate", "--config", cfg_b.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solved for model"));
}

#[test]
fn constant_observable_estimates_exactly_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "one.toml",
        "[observable]\nname = \"constant\"\nvalue = 1.0\n[control]\nmode = \"none\"\n[estimate]\nparticles = 5\nn1 = 4\nn2 = 4\nm1 = 10\nm2 = [5]\n",
    );
    let out = dir.path().join("out");
    run_ok(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let v = read_json(&out.join("estimate.json"));
    assert_eq!(v["runs"][0]["result"]["estimate"].as_f64(), Some(1.0));
}

#[test]
fn fixed_seed_runs_are_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "r.toml", SMALL_RARE);
    let mut results = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "2")] {
        let out = dir.path().join(name);
        run_ok(&[
            "estimate",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "11",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
        let mut v = read_json(&out.join("estimate.json"));
        strip_wall_time(&mut v);
        v["config"]["out"] = Value::Null;
        v["config"]["workers"] = Value::Null;
        results.push(v);
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn adaptive_round_trip_through_the_result_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "r.toml", SMALL_RARE);
    let first = dir.path().join("first");
    run_ok(&["adaptive", "--config", cfg.to_str().unwrap(), "--out", first.to_str().unwrap()]);
    let result = first.join("adaptive.json");
    let second = dir.path().join("second");
    run_ok(&["adaptive", "--config", result.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    let (mut a, mut b) = (read_json(&result), read_json(&second.join("adaptive.json")));
    for v in [&mut a, &mut b] {
        strip_wall_time(v);
        v["config"]["out"] = Value::Null;
    }
    assert_eq!(a, b);
    let levels = fs::read_to_string(first.join("adaptive_trace.jsonl")).unwrap();
    assert_eq!(levels.lines().count(), a["trace"].as_array().unwrap().len());
}

#[test]
fn deterministic_adaptive_run_has_one_level() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "det.toml",
        r#"
[model]
name = "zero-kernel-drift"
sigma = 0.0
initial_law = { kind = "constant", value = 0.0 }
parameter_law = { kind = "constant", value = 0.1 }

[observable]
name = "indicator"
threshold = -1.0

[control]
mode = "none"
"#,
    );
    let out = dir.path().join("out");
    run_ok(&["adaptive", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let v = read_json(&out.join("adaptive.json"));
    assert_eq!(v["trace"].as_array().unwrap().len(), 1);
    assert_eq!(v["result"]["estimate"].as_f64(), Some(1.0));
    assert_eq!(v["result"]["level"].as_u64(), Some(0));
}

#[test]
fn level_cap_gives_exit_code_four_and_keeps_the_trace() {
    let dir = TempDir::new().unwrap();
    let body = format!("{SMALL_RARE}\n[adaptive]\nlevel_cap = 0\nrough_m1 = 100\nrough_m2 = 20\n");
    let cfg = write_config(dir.path(), "cap.toml", &body);
    let out = dir.path().join("out");
    let o = mvdlmc(&["adaptive", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(out.join("adaptive_trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 1);
}

#[test]
fn deterministic_studies_have_vanishing_differences() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "v.toml",
        r#"
[model]
sigma = 0.0
initial_law = { kind = "constant", value = 0.3 }
parameter_law = { kind = "constant", value = 0.1 }

[observable]
name = "cos"

[verify]
base_particles = 4
base_steps = 4
reference_steps = 16
particles = [2, 4]
steps = [2, 4]
m1 = 4
m2 = 3
variance_particles = [2, 4]
variance_steps = 4
variance_m1 = 4
variance_m2 = 3
"#,
    );
    let out = dir.path().join("out");
    run_ok(&["verify-assumptions", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    for row in rows {
        let mean: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!(mean.abs() < 1e-14, "{row}");
    }
    assert!(out.join("slopes.csv").exists());
    assert!(out.join("variance.csv").exists());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let unknown_field = write_config(dir.path(), "u.toml", "[model]\nsigmaa = 0.4\n");
    let unknown_model = write_config(dir.path(), "m.toml", "[model]\nname = \"lorenz\"\n");
    let bad_split = write_config(dir.path(), "t.toml", "[adaptive]\ntheta_split = 1.5\n");
    let missing = dir.path().join("missing.toml");
    for cfg in [&unknown_field, &unknown_model, &bad_split, &missing] {
        let o = mvdlmc(&["estimate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{}", cfg.display());
    }
}

#[test]
fn checked_in_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 6);
}
