use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn skyrmap(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skyrmap")).args(args).current_dir(dir).output().expect("binary runs")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn unknown_key_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "map = \"identity(1)\"\n[quad]\norder_2d = 8\n").unwrap();
    let out = skyrmap(&["energy", "--config", "c.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("order_2d"));
}

#[test]
fn command_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "command = \"energy\"\nmap = \"identity(1)\"\n").unwrap();
    assert_eq!(skyrmap(&["analyze", "--config", "c.toml"], tmp.path()).status.code(), Some(1));
    assert_eq!(skyrmap(&["bogus"], tmp.path()).status.code(), Some(1));
}

#[test]
fn missing_map_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(skyrmap(&["energy", "--out", "o"], tmp.path()).status.code(), Some(1));
}

#[test]
fn constant_map_has_zero_energy() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "map = \"constant\"\n").unwrap();
    let out = skyrmap(&["energy", "--config", "c.toml", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&tmp.path().join("o"));
    for key in ["e_sigma1", "e_sigma2", "e_4", "e_total"] {
        assert_eq!(r["energy"][key].as_f64(), Some(0.0), "{key}");
    }
    assert!(tmp.path().join("o/tables/energy.csv").exists());
}

#[test]
fn faddeev_case_reports_charge_and_energy() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "[reproduce]\ncase = \"faddeev-minimizer-k2\"\n").unwrap();
    let out = skyrmap(&["reproduce", "--config", "c.toml", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&tmp.path().join("o"));
    let e = r["e_sigma2"].as_f64().unwrap();
    assert!((e - 16.0 * PI * PI).abs() < 1e-8 * e, "{e}");
    assert_eq!(r["hopf"].as_f64(), Some(1.0));
    assert_eq!(r["bound_attained"], Value::Bool(true));
    assert_eq!(r["pass"], Value::Bool(true));
    assert!(!r["citation"].as_str().unwrap().is_empty());
}

#[test]
fn alpha_join_ratio_case() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "[reproduce]\ncase = \"alpha-join-ratio\"\n").unwrap();
    let out = skyrmap(&["reproduce", "--config", "c.toml", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(&tmp.path().join("o"))["pass"], Value::Bool(true));
}

#[test]
fn unknown_case_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "[reproduce]\ncase = \"nope\"\n").unwrap();
    assert_eq!(skyrmap(&["reproduce", "--config", "c.toml", "--out", "o"], tmp.path()).status.code(), Some(1));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "map = \"gamma_hopf(affine(pi/2, -2), 2)\"\n").unwrap();
    for o in ["a", "b"] {
        assert_eq!(skyrmap(&["energy", "--config", "c.toml", "--out", o], tmp.path()).status.code(), Some(0));
    }
    for f in ["report.json", "tables/energy.csv"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn stability_is_deterministic_in_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "[stability]\nform = \"sigma2\"\nrandom_fields = 1\norder = 8\n").unwrap();
    for o in ["a", "b"] {
        let out = skyrmap(&["stability", "--config", "c.toml", "--seed", "7", "--out", o], tmp.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(tmp.path().join("a/report.json")).unwrap();
    assert_eq!(a, std::fs::read(tmp.path().join("b/report.json")).unwrap());
}

#[test]
fn echo_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "map = \"identity(1)\"\nkappa = 2.5\n").unwrap();
    let out = skyrmap(&["energy", "--config", "c.toml", "--seed", "11", "--echo-config"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = skyrmap_cli::RunConfig::parse(&text).unwrap();
    assert_eq!(cfg.kappa, 2.5);
    assert_eq!(cfg.seed, 11);
    assert_eq!(cfg.command, Some(skyrmap_cli::Command::Energy));
    assert_eq!(cfg.grid.residual, 64);
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn failed_case_exits_with_two() {
    // a starved minimizer cannot hit the profile target
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "[reproduce]\ncase = \"profile-minimization-k2\"\n[profile]\nmax_iter = 3\n").unwrap();
    let out = skyrmap(&["reproduce", "--config", "c.toml", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(&tmp.path().join("o"))["pass"], Value::Bool(false));
}
