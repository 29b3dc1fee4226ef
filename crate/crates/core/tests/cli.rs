use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qvarifold::harness::{read_csv, FixedScaleRow};
use qvarifold::varifold::read_varifold_csv;

fn qvarifold(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qvarifold")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_writes_a_readable_varifold() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plane.csv");
    let out = qvarifold(&["gen", "two_planes", "--mesh", "0.1", "--extent", "1", "-o", path(&file)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_varifold_csv(&file).unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("scenario=two_planes"));
    assert!(stdout.contains(&format!("atoms={}", v.len())));
}

#[test]
fn gen_to_stdout_separates_csv_and_summary() {
    let out = qvarifold(&["gen", "plane", "--mesh", "0.25", "--extent", "0.6"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let (csv, summary) = text.split_once("\n\n").unwrap();
    assert!(read_varifold_csv_from(csv).is_ok());
    assert!(summary.lines().all(|l| l.contains('=')));
}

fn read_varifold_csv_from(text: &str) -> qvarifold::Result<qvarifold::DiscreteVarifold> {
    qvarifold::varifold::read_varifold(text.as_bytes())
}

#[test]
fn excess_reports_tilt_and_height() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("tilted.csv");
    assert_eq!(code(&qvarifold(&["gen", "tilted_plane", "--mesh", "0.05", "-o", path(&file)])), 0);
    let tilt = qvarifold(&["excess", "--varifold", path(&file), "--cylinder", "0:0:0,0.5,0.5,0:1", "--q", "2", "--tilt"]);
    assert_eq!(code(&tilt), 0);
    let text = String::from_utf8(tilt.stdout).unwrap();
    assert!(text.starts_with("quantity,q,value,flags\ntilt,"));
    let height = qvarifold(&["excess", "--varifold", path(&file), "--cylinder", "0:0:0,0.5,0.5,0:1", "--q", "inf", "--height"]);
    assert_eq!(code(&height), 0);
    assert!(String::from_utf8(height.stdout).unwrap().contains("height.total="));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("verify.csv");
    let ok = qvarifold(&["verify", "--scenario", "plane", "-o", path(&csv)]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    let rows: Vec<FixedScaleRow> = read_csv(&csv).unwrap();
    assert_eq!(rows[0].lhs, 0.0);

    let flagged = qvarifold(&["verify", "--scenario", "bump"]);
    assert_eq!(code(&flagged), 2);
    assert!(String::from_utf8(flagged.stdout).unwrap().contains("first_variation"));

    assert_eq!(code(&qvarifold(&["verify", "--scenario", "no_such_scenario"])), 1);
    assert_eq!(code(&qvarifold(&["verify"])), 1);
    assert_eq!(code(&qvarifold(&["--help"])), 0);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "radius = 0.5\nunknown_key = 3\n").unwrap();
    let out = qvarifold(&["verify", "--scenario", "plane", "--config", path(&cfg)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8(out.stderr).unwrap().contains("unknown_key"));
    let missing = qvarifold(&["verify", "--scenario", "plane", "--config", path(&dir.path().join("absent.cfg"))]);
    assert_eq!(code(&missing), 1);
}

#[test]
fn approx_writes_its_sets() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("q2.csv");
    assert_eq!(code(&qvarifold(&["gen", "qgraph2", "--mesh", "0.05", "-o", path(&file)])), 0);
    let params = dir.path().join("params.cfg");
    fs::write(&params, "center = 0:0:0\nradius = 1\nheight = 3\nq = 2\neps = 1\neps1 = 1\nmass_bound = 20\n").unwrap();
    let outdir = dir.path().join("approx");
    let out = qvarifold(&["approx", "--varifold", path(&file), "--params", path(&params), "-o", path(&outdir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("bad=0"));
    assert!(text.contains("hypotheses=ok"));
    assert!(text.contains("c7_tilt_violations=0"));
    for name in ["bad.csv", "good.csv", "y.csv", "cells.csv", "f.csv", "diagnostics.txt"] {
        assert!(outdir.join(name).exists(), "{name}");
    }
}

#[test]
fn decay_and_mono_accept_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("decay.cfg");
    fs::write(&cfg, "# coarse and quick\nr0 = 0.2\nlevels = 2\nmesh = 0.02\n").unwrap();
    let out = qvarifold(&["decay", "--scenario", "paraboloid", "--config", path(&cfg)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("scenario,probe,r,lhs,rhs,usable\n"));
    let mono = qvarifold(&["mono", "--scenario", "sphere", "--config", path(&cfg)]);
    assert_eq!(code(&mono), 0);
    assert!(String::from_utf8(mono.stdout).unwrap().contains("quasi0"));
}
