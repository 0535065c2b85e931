use std::fs;
use std::path::Path;
use std::process::Command;

use sha2::{Digest, Sha256};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_diagtomo"))
}

fn run(dir: &Path, args: &[&str]) -> i32 {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

const SMALL: &str = "[grid]\nxi_max = 1.2\nr_max = 0.3\nd_xi = 0.1\nd_r = 0.05\n[shots]\ntotal = 200000\n";

fn hash(p: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(p).unwrap()).to_vec()
}

#[test]
fn simulate_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "c.toml", SMALL);
    assert_eq!(run(d.path(), &["--config", "c.toml", "--seed", "5", "--out", "a", "simulate"]), 0);
    assert_eq!(run(d.path(), &["--config", "c.toml", "--seed", "5", "--out", "b", "simulate"]), 0);
    assert_eq!(hash(&d.path().join("a/dataset.csv")), hash(&d.path().join("b/dataset.csv")));
    assert!(d.path().join("a/config.resolved.toml").exists());
    assert_eq!(run(d.path(), &["--config", "c.toml", "--seed", "6", "--out", "c", "simulate"]), 0);
    assert_ne!(hash(&d.path().join("a/dataset.csv")), hash(&d.path().join("c/dataset.csv")));
}

#[test]
fn default_grid_has_3900_points() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &["--out", "o", "simulate"]), 0);
    let text = fs::read_to_string(d.path().join("o/dataset.csv")).unwrap();
    assert_eq!(text.lines().count(), 3901);
}

#[test]
fn simulate_then_estimate_round_trip() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "c.toml", SMALL);
    assert_eq!(run(d.path(), &["--config", "c.toml", "--out", "o", "simulate"]), 0);
    assert_eq!(run(d.path(), &["--config", "c.toml", "--out", "o", "estimate", "o/dataset.csv"]), 0);
    let rep = fs::read_to_string(d.path().join("o/report.csv")).unwrap();
    assert!(rep.starts_with("name,re,im,std,bias_sys,mse\n"));
    assert_eq!(rep.lines().count(), 4);
    assert!(d.path().join("o/report.toml").exists());
}

#[test]
fn charfunc_table() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "c.toml",
        "[grid]\nre_xi = { min = -1.0, max = 1.0, steps = 5 }\nim_xi = { min = -1.0, max = 1.0, steps = 5 }\nr = { min = 0.25, max = 0.25, steps = 1 }\n",
    );
    assert_eq!(run(d.path(), &["--config", "c.toml", "--out", "o", "charfunc"]), 0);
    let text = fs::read_to_string(d.path().join("o/charfunc.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("re_xi,im_xi,r,re_chi,im_chi"));
    for l in lines {
        let im: f64 = l.split(',').nth(4).unwrap().parse().unwrap();
        assert!(im.abs() <= 1e-10, "{l}");
    }
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "bad.toml", "[model]\nwhat = 1\n");
    assert_eq!(run(d.path(), &["--config", "bad.toml", "validate"]), 2);
    assert_eq!(run(d.path(), &["--config", "missing.toml", "validate"]), 3);
    assert_eq!(run(d.path(), &["--out", "o", "estimate", "nope.csv"]), 3);
    write(
        d.path(),
        "zero.csv",
        "re_xi,im_xi,r,theta,n_B,basis,shots,plus_count,seed\n0.1,0,0.1,0,0,x,0,0,1\n",
    );
    assert_eq!(run(d.path(), &["--out", "o", "validate", "--dataset", "zero.csv"]), 2);
    write(d.path(), "c5.toml", "[protocol]\ncutoff = 5\n");
    let out = bin()
        .current_dir(d.path())
        .args(["--config", "c5.toml", "--out", "o", "validate"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL truncation")), "{stdout}");
}
