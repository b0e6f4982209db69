use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn run(mode: &str, config: Option<&str>, dir: &TempDir) -> (i32, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_neckpinch"));
    cmd.arg(mode)
        .arg("--quiet")
        .env("NECKPINCH_OUT", dir.path().join("out"));
    if let Some(text) = config {
        let path = dir.path().join("config.toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    let out = cmd.output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn assert_outputs_carry_run_id(out: &Path) {
    let m = manifest(out);
    let id = m["run_id"].as_str().unwrap();
    let outputs = m["outputs"].as_array().unwrap();
    assert!(!outputs.is_empty());
    for name in outputs {
        let text = fs::read_to_string(out.join(name.as_str().unwrap())).unwrap();
        assert!(text.contains(id), "{name} lacks the run id");
    }
}

#[test]
fn spectrum_run_passes() {
    let dir = TempDir::new().unwrap();
    let (code, err) = run("spectrum", None, &dir);
    assert_eq!(code, 0, "{err}");
    let out = dir.path().join("out");
    assert_outputs_carry_run_id(&out);
    assert_eq!(manifest(&out)["all_passed"], true);
    let csv = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("alpha,operator,mode"));
}

#[test]
fn cylinder_run_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let cfg = "[datum]\nkind = \"cylinder\"\nradius = 1.0\n\
               [stop]\nu_min_stop = 0.05\n\
               [grid]\nintervals = 100\n\
               [integrator]\ntol = 1e-9\n";
    let (code, err) = run("physical", Some(cfg), &dir);
    assert_eq!(code, 0, "{err}");
    let out = dir.path().join("out");
    assert_outputs_carry_run_id(&out);
    let names: Vec<String> = manifest(&out)["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap().to_string())
        .collect();
    assert!(names.contains(&"cylinder_profile".to_string()));
}

#[test]
fn failing_check_exits_one() {
    let dir = TempDir::new().unwrap();
    let (code, _) = run("spectrum", Some("[spectrum]\nspacing = 0.2\n"), &dir);
    assert_eq!(code, 1);
    let m = manifest(&dir.path().join("out"));
    assert_eq!(m["all_passed"], false);
}

#[test]
fn bad_config_exits_two_with_error_record() {
    let dir = TempDir::new().unwrap();
    let (code, err) = run("spectrum", Some("d = 1\n"), &dir);
    assert_eq!(code, 2);
    assert!(err.contains("d >= 2"), "{err}");
    let rec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/error.json")).unwrap())
            .unwrap();
    assert_eq!(rec["kind"], "config");
}

#[test]
fn runtime_error_exits_two_with_error_record() {
    let dir = TempDir::new().unwrap();
    let cfg = "[datum]\nkind = \"sphere\"\nradius = 1.0\n[grid]\nhalf_width = 0.5\n";
    let (code, _) = run("rescaled", Some(cfg), &dir);
    assert_eq!(code, 2);
    let rec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/error.json")).unwrap())
            .unwrap();
    assert!(rec["message"].as_str().unwrap().contains("noncompact"));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    assert_eq!(run("spectrum", None, &a).0, 0);
    assert_eq!(run("spectrum", None, &b).0, 0);
    for name in ["spectrum.csv", "probe.json"] {
        let x = fs::read(a.path().join("out").join(name)).unwrap();
        let y = fs::read(b.path().join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
}
