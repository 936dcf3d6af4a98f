//! The command line contract: config precedence, rejections, exit codes and
//! manifest contents.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pde-voronoi"))
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn minimal_colonize_config_takes_table_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.cfg");
    std::fs::write(&cfg, "# four sources, everything else default\nsources = 4\n").unwrap();
    let out = bin()
        .args(["colonize", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&tmp.path().join("run"));
    let echo = &m["config_echo"];
    assert_eq!(echo["particles"], "100");
    assert_eq!(echo["step"], "0.1");
    assert_eq!(echo["epsilon"], "0.01");
    assert_eq!(echo["iterations"], "500");
}

#[test]
fn out_of_range_lambda_exits_one_naming_the_key() {
    let out = bin().args(["transport", "--override", "lambda=1.3"]).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));
}

#[test]
fn unknown_key_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.cfg");
    std::fs::write(&cfg, "gird = 64\n").unwrap();
    let out = bin().args(["voronoi", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gird"));
}

#[test]
fn grid_flag_beats_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.cfg");
    std::fs::write(&cfg, "grid = 128\nseed = 5\n").unwrap();
    let run = tmp.path().join("run");
    let out = bin()
        .args(["voronoi", "--grid", "32", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let m = manifest(&run);
    assert_eq!(m["config_echo"]["grid"], "32");
    assert_eq!(m["config_echo"]["seed"], "5");
    let pgm = std::fs::read(run.join("labels.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n32 32\n"));
}

#[test]
fn failed_assertion_exits_two_with_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let out = bin()
        .args([
            "colonize",
            "--override",
            "min_fraction=1",
            "--override",
            "iterations=50",
            "--out",
        ])
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    let m = manifest(&run);
    assert_eq!(m["assertions"][0]["pass"], false);
    assert!(run.join("trajectories.csv").exists());
}

#[test]
fn transport_manifest_lists_and_hashes_its_files() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let out = bin()
        .args([
            "transport",
            "--grid",
            "64",
            "--override",
            "samples=2000",
            "--override",
            "atoms=0",
            "--out",
        ])
        .arg(&run)
        .output()
        .unwrap();
    assert!(matches!(code(&out), 0 | 2), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&run);
    let files = m["files"].as_array().unwrap();
    let names: Vec<&str> = files.iter().map(|f| f["name"].as_str().unwrap()).collect();
    for want in ["report.json", "cells.pgm", "samples.csv"] {
        assert!(names.contains(&want), "{names:?}");
    }
    for f in files {
        let bytes = std::fs::read(run.join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), f["sha256"].as_str().unwrap());
    }
    let on_disk = std::fs::read_dir(&run).unwrap().count();
    assert_eq!(on_disk, files.len() + 1, "every file but the manifest is listed");
    let csv = std::fs::read_to_string(run.join("samples.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2001);
}

#[test]
fn empty_ray_ranges_are_noted_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let out = bin()
        .args(["heat", "--grid", "32", "--override", "epsilon=5", "--out"])
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let notes = manifest(&run)["notes"].to_string();
    assert!(notes.contains("empty admissible range"), "{notes}");
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["voronoi", "--grid", "16"])
        .env("PDE_VORONOI_OUT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(tmp.path().join("voronoi").join("manifest.json").exists());
}

#[test]
fn torus_heat_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let out = bin()
        .args(["heat", "--grid", "64", "--override", "topology=torus", "--out"])
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let hdr = std::fs::read_to_string(run.join("field.hdr")).unwrap();
    assert!(hdr.contains("topology = torus"));
}

#[test]
fn torus_cells_reaching_the_cut_locus_are_errors() {
    // One site: its cell is the whole torus, which contains the cut locus.
    let out = bin()
        .args([
            "heat",
            "--grid",
            "32",
            "--override",
            "topology=torus",
            "--override",
            "sources=1",
        ])
        .env("PDE_VORONOI_OUT", tempfile::tempdir().unwrap().path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cut locus"));
}
