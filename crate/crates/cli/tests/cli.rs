use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn grazing(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grazing")).args(args).output().expect("run grazing")
}

fn scenario(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_in(dir: &Path, cmd: &str, sc: &Path, out: &str, extra: &[&str]) -> Output {
    let out = dir.join(out);
    let mut args = vec![cmd, "--scenario", sc.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    grazing(&args)
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr is not JSON: {}", String::from_utf8_lossy(&o.stderr)))
}

const SPIRAL_SIM: &str = r#"{"system": "spiral-impact", "initial_state": [0.8, 1.2], "t_end": 6.5}"#;

#[test]
fn simulate_output_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(dir.path(), "sim.json", SPIRAL_SIM);
    for out in ["a", "b"] {
        let o = run_in(dir.path(), "simulate", &sc, out, &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["trajectory.csv", "events.csv", "manifest.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        if f == "manifest.json" {
            // the manifest records the output paths, which differ
            let strip = |v: &[u8]| {
                let mut j: serde_json::Value = serde_json::from_slice(v).unwrap();
                j.as_object_mut().unwrap().remove("outputs");
                j
            };
            assert_eq!(strip(&a), strip(&b));
        } else {
            assert_eq!(a, b, "{f} differs");
        }
    }
    let events = fs::read_to_string(dir.path().join("a/events.csv")).unwrap();
    assert!(events.starts_with("theta,type,axial,transversality,pre_1,pre_2,post_1,post_2,zero_coords\n"));
}

#[test]
fn manifest_hashes_the_scenario() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(dir.path(), "sim.json", SPIRAL_SIM);
    let o = run_in(dir.path(), "simulate", &sc, "out", &["--seed", "42"]);
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["scenario_sha256"], hex::encode(Sha256::digest(SPIRAL_SIM.as_bytes())));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["system"], "spiral-impact");
    assert_eq!(m["seed"], 42);
}

#[test]
fn json_format_writes_json() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(dir.path(), "sim.json", SPIRAL_SIM);
    let o = run_in(dir.path(), "simulate", &sc, "out", &["--format", "json"]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("out/trajectory.json")).unwrap()).unwrap();
    assert_eq!(doc["system"], "spiral-impact");
    assert!(doc["events"].as_array().is_some_and(|e| !e.is_empty()));
}

#[test]
fn unknown_system_exits_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(dir.path(), "bad.json", r#"{"system": "no-such-system", "initial_state": [0, 1], "t_end": 1}"#);
    let o = run_in(dir.path(), "simulate", &sc, "out", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "validation");
}

#[test]
fn tabulated_field_is_rejected() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(dir.path(), "tab.json", r#"{"system": "spiral-impact", "table": [[0, 1], [1, 0]]}"#);
    assert_eq!(run_in(dir.path(), "simulate", &sc, "out", &[]).status.code(), Some(2));
}

#[test]
fn bad_tolerance_scale_is_rejected() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(dir.path(), "sim.json", SPIRAL_SIM);
    assert_eq!(run_in(dir.path(), "simulate", &sc, "out", &["--tol-scale", "0"]).status.code(), Some(2));
}

#[test]
fn event_budget_exits_with_numeric_code() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(
        dir.path(),
        "budget.json",
        r#"{"system": "spiral-impact", "initial_state": [0, 1], "t_end": 20, "tolerances": {"max_events": 1}}"#,
    );
    let o = run_in(dir.path(), "simulate", &sc, "out", &[]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "numeric");
}

#[test]
fn failed_condition_exits_with_condition_code() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(dir.path(), "v.json", r#"{"system": "nonaxial-circle", "samples": 50}"#);
    let o = run_in(dir.path(), "validate", &sc, "out", &[]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(stderr_json(&o)["error"], "condition");
    assert!(dir.path().join("out/conditions.json").exists());

    let sc = scenario(dir.path(), "ok.json", r#"{"system": "spiral-impact", "samples": 50}"#);
    assert_eq!(run_in(dir.path(), "validate", &sc, "ok", &[]).status.code(), Some(0));
}

#[test]
fn classify_reports_the_grazing_point() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(dir.path(), "c.json", r#"{"system": "impact-cycle", "initial_state": [0, 0]}"#);
    let o = run_in(dir.path(), "classify", &sc, "out", &["--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| fs::read_to_string(p).unwrap())
        .collect::<String>();
    assert!(text.contains("gamma"), "{text}");
}

fn verdicts(csv: &str) -> Vec<(String, String)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[f.len() - 1].to_string())
        })
        .collect()
}

#[test]
fn tolerance_scaling_does_not_flip_verdicts() {
    let dir = TempDir::new().unwrap();
    for (name, body) in [
        ("spiral", r#"{"system": "spiral-impact"}"#),
        ("impact", r#"{"system": "impact-cycle"}"#),
    ] {
        let sc = scenario(dir.path(), &format!("{name}.json"), body);
        let mut seen = Vec::new();
        for scale in ["0.5", "1", "2"] {
            let out = format!("{name}-{scale}");
            let o = run_in(dir.path(), "floquet", &sc, &out, &["--tol-scale", scale]);
            assert!(o.status.success(), "{name} at {scale}: {}", String::from_utf8_lossy(&o.stderr));
            seen.push(verdicts(&fs::read_to_string(dir.path().join(out).join("floquet.csv")).unwrap()));
        }
        assert_eq!(seen[0], seen[1], "{name}");
        assert_eq!(seen[1], seen[2], "{name}");
    }
}

#[test]
fn bifurcate_writes_one_row_per_orbit() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(dir.path(), "b.json", r#"{"system": "impact-cycle", "mu_grid": [-0.2, 0.0]}"#);
    let o = run_in(dir.path(), "bifurcate", &sc, "out", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("out/bifurcation.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("mu,orbit_id,T,zeta_1,zeta_2,events_per_period,det_A6,stable"));
    let mus: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(mus.iter().filter(|&&m| m == -0.2).count(), 2);
    assert_eq!(mus.iter().filter(|&&m| m == 0.0).count(), 1);
}
