use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const PROFILE_H3: &str = r#"
[manifold]
model = "hyperbolic"
k = 1.0
n = 3

[experiment]
name = "profile"

[sampling]
seed = 7
count = 5
"#;

fn horolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_horolab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(config: &Path, out: &Path) -> Output {
    horolab(&["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

#[test]
fn h3_profile_exits_zero_with_h_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "profile.toml", PROFILE_H3);
    let out = run(&cfg, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("profile.json"));
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert!((r["h"].as_f64().unwrap() - 2.0).abs() <= 1e-5, "{r}");
        assert_eq!(r["rank"], 1);
    }
    assert_eq!(doc["summary"]["pass"], true);
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn profile_csv_header_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{PROFILE_H3}\n[output]\nformat = \"csv\"\n").replace("count = 5", "count = 2");
    let cfg = write_config(dir.path(), "profile.toml", &body);
    let out = run(&cfg, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "v_index,h,det_D,trace_D,rank,norm_bound_ok,det_trace_ok");
    assert_eq!(text.lines().count(), 3);
    assert!(!text.contains('\r'));
    let h: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((h - 2.0).abs() <= 1e-5);
    let summary = read_json(&dir.path().join("profile.summary.json"));
    assert!(summary.get("rows").is_none());
    assert_eq!(summary["summary"]["pass"], true);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let body = PROFILE_H3.replace("count = 5", "count = 3");
    let cfg = write_config(dir.path(), "profile.toml", &body);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&cfg, &a).status.code(), Some(0));
    assert_eq!(horolab(&["run", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--jobs", "1"]).status.code(), Some(0));
    assert_eq!(fs::read(a.join("profile.json")).unwrap(), fs::read(b.join("profile.json")).unwrap());
}

#[test]
fn json_floats_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{PROFILE_H3}\n[output]\nformat = \"csv\"\n").replace("count = 5", "count = 2");
    let cfg = write_config(dir.path(), "profile.toml", &body);
    assert_eq!(run(&cfg, &dir.path().join("csv")).status.code(), Some(0));
    let json_cfg = write_config(dir.path(), "profile_json.toml", &body.replace("\"csv\"", "\"json\""));
    assert_eq!(run(&json_cfg, &dir.path().join("json")).status.code(), Some(0));
    let doc = read_json(&dir.path().join("json/profile.json"));
    let csv = fs::read_to_string(dir.path().join("csv/profile.csv")).unwrap();
    for (row, line) in doc["rows"].as_array().unwrap().iter().zip(csv.lines().skip(1)) {
        let from_csv: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(row["det_D"].as_f64().unwrap().to_bits(), from_csv.to_bits());
    }
}

#[test]
fn sl2r_conjugate_time_mismatch_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
[manifold]
model = "sl2r"
a = -2.0
b = 1.0

[experiment]
name = "conjugate-scan"
T = 8.0
dt = 0.05
expected_first_conjugate_time = 6.2832

[sampling]
seed = 0
"#;
    let cfg = write_config(dir.path(), "sl2.toml", body);
    let out = run(&cfg, dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("conjugate-scan.json"));
    let t = doc["fields"]["first_conjugate_time"].as_f64().unwrap();
    assert!((t - std::f64::consts::PI * 2f64.sqrt()).abs() <= 1e-4, "{t}");
    assert_eq!(doc["summary"]["pass"], false);
}

#[test]
fn negative_tolerance_exits_two_naming_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{PROFILE_H3}\n[sampling.tolerances]\nlimit = -1e-6\n");
    let line = body.lines().position(|l| l.starts_with("limit")).unwrap() + 1;
    let cfg = write_config(dir.path(), "bad.toml", &body);
    let out = run(&cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sampling.tolerances.limit"), "{err}");
    assert!(err.contains(&format!("line {line}")), "{err}");
    assert!(!dir.path().join("profile.json").exists());
}

#[test]
fn unknown_model_and_missing_file_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &PROFILE_H3.replace("\"hyperbolic\"", "\"spherical\""));
    assert_eq!(run(&cfg, dir.path()).status.code(), Some(2));
    assert_eq!(run(&dir.path().join("absent.toml"), dir.path()).status.code(), Some(2));
}

#[test]
fn output_path_resolves_against_config_dir() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{PROFILE_H3}\n[output]\npath = \"reports\"\n").replace("count = 5", "count = 1");
    let cfg = write_config(dir.path(), "profile.toml", &body);
    let out = horolab(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("reports/profile.json").exists());
}

#[test]
fn list_experiments_names_every_pipeline() {
    let out = horolab(&["list-experiments"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(
        names,
        [
            "curvature-check",
            "jacobi",
            "stable-tensor",
            "profile",
            "flow-scan",
            "reversibility-scan",
            "busemann",
            "leaf-probe",
            "conjugate-scan",
            "datri-check",
            "sl2-verify"
        ]
    );
    let help = String::from_utf8(horolab(&["--help"]).stdout).unwrap();
    for n in &names {
        assert!(help.contains(n), "--help lacks {n}");
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            horolab::parse(&fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            seen += 1;
        }
    }
    assert!(seen >= 11);
}
