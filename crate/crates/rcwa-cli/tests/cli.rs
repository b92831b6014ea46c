use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rcwa_cli::config::parse_config;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn rcwa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcwa")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn bare_interface_reflects_four_percent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("interface.toml");
    let out = rcwa(&["solve", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&tmp.path().join("summary.json"));
    assert!((summary["total_r"].as_f64().unwrap() - 0.04).abs() < 1e-12);
    assert!((summary["energy"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let rows = csv_rows(&tmp.path().join("de.csv"));
    assert_eq!(rows.len(), 2);
    let manifest = read_json(&tmp.path().join("manifest.json"));
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn benchmark_device_parses_and_conserves_energy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("deflector.toml");
    let run = parse_config(&cfg).unwrap();
    assert_eq!(run.geometry().unwrap().layer_count(), 1);
    let out = rcwa(&["solve", cfg.to_str().unwrap(), "--fto", "12", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&tmp.path().join("summary.json"));
    assert!((summary["energy"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert_eq!(summary["fto"][0], 12);
    assert_eq!(csv_rows(&tmp.path().join("de.csv")).len(), 2 * 25);
}

#[test]
fn field_output_has_six_components_per_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("deflector.toml");
    let out = rcwa(&[
        "solve",
        cfg.to_str().unwrap(),
        "--fto",
        "6",
        "--field",
        "64",
        "1",
        "32",
        "--dump-fourier",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(tmp.path().join("field.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    assert_eq!(header.len(), 3 + 12);
    assert_eq!(&header[3], "Ex_re");
    assert_eq!(reader.records().count(), 64 * 32);
    let fourier = csv_rows(&tmp.path().join("fourier_layer0.csv"));
    assert_eq!(fourier.len(), 4 * 6 + 1);
}

#[test]
fn conflicting_geometry_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.toml",
        r#"
[simulation]
wavelength = 500.0
period = [1.0, 1.0]
fto = [0, 0]
thickness = [1.0]

[geometry.raster]
indices = [[[1.5]]]

[[geometry.vector.layers]]
index = 1.5
"#,
    );
    let out = rcwa(&["solve", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mutually exclusive"));
    assert_eq!(rcwa(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(rcwa(&["solve", "/nonexistent/config.toml"]).status.code(), Some(1));
}

#[test]
fn singular_convolution_is_a_numerical_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "dfs.toml",
        r#"
[simulation]
wavelength = 1.0
period = [1.0, 1.0]
fto = [5, 0]
thickness = [0.3]
mode = "dfs"

[geometry.raster]
indices = [[[1.0, 2.0]]]
"#,
    );
    let out = rcwa(&["solve", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn csv_layers_load_relative_to_config() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "layer.csv", "1.0, 2.0, 2.0\n1.0, 1.0, 2.0\n");
    let cfg = write(
        tmp.path(),
        "grid.toml",
        r#"
output = "res"

[simulation]
wavelength = 1.0
theta = 10.0
period = [0.8, 0.7]
fto = [2, 2]
thickness = [0.25]
mode = "enhanced-dfs"

[geometry.raster]
csv = ["layer.csv"]
"#,
    );
    let out = rcwa(&["solve", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&tmp.path().join("res/summary.json"));
    assert!((summary["energy"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    let missing = write(tmp.path(), "missing.toml", &fs::read_to_string(&cfg).unwrap().replace("layer.csv", "nope.csv"));
    assert_eq!(rcwa(&["solve", missing.to_str().unwrap()]).status.code(), Some(1));
}

fn strip_time(rows: Vec<Vec<String>>) -> Vec<Vec<String>> {
    rows.into_iter().map(|mut r| {
        r.pop();
        r
    }).collect()
}

#[test]
fn sweep_is_deterministic_and_flat_for_uniform_devices() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "uniform.toml",
        r#"
[simulation]
wavelength = 1.0
period = [0.9, 1.0]
fto = [1, 0]
thickness = [0.2]
n_ii = 1.5

[geometry.raster]
indices = [[[2.0, 2.0, 2.0]]]

[sweep]
fto = [1, 3, 5]
order = [0, 0]
"#,
    );
    let out = rcwa(&["sweep", cfg.to_str().unwrap(), "--out", tmp.path().join("a").to_str().unwrap(), "--jobs", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&tmp.path().join("a/sweep.csv"));
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r[2] == rows[0][2]));

    let dev = configs().join("deflector.toml");
    let text = fs::read_to_string(&dev).unwrap() + "\n[sweep]\nfto = [4, 8]\nmodes = [\"cfs\", \"enhanced-dfs\"]\n";
    let cfg = write(tmp.path(), "dev.toml", &text);
    let run = |d: &str| {
        let o = rcwa(&["sweep", cfg.to_str().unwrap(), "--out", tmp.path().join(d).to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        strip_time(csv_rows(&tmp.path().join(d).join("sweep.csv")))
    };
    assert_eq!(run("b"), run("c"));
    assert_eq!(rcwa(&["sweep", cfg.to_str().unwrap(), "--fto", "3"]).status.code(), Some(1));
}

#[test]
fn optimize_writes_trajectories_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("optimize.toml"))
        .unwrap()
        .replace("cells = 64", "cells = 8")
        .replace("fto = 40", "fto = 5")
        .replace("epochs = 100", "epochs = 3")
        .replace("baseline = 100", "baseline = 4");
    let cfg = write(tmp.path(), "opt.toml", &text);
    let run = |d: &str| {
        let o = rcwa(&["optimize", cfg.to_str().unwrap(), "--seed", "3", "--out", tmp.path().join(d).to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(tmp.path().join(d).join("trajectory_seed3.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert_eq!(a.lines().count(), 1 + 4);
    let summary = read_json(&tmp.path().join("a/summary.json"));
    assert_eq!(summary["seeds"].as_array().unwrap().len(), 1);
    assert!(summary["random_baseline_mean"].as_f64().is_some());
    let pattern = csv_rows(&tmp.path().join("a/pattern_seed3.csv"));
    assert!(pattern.iter().all(|r| r[3] == "1e0" || r[3] == "3.6e0"));
}

#[test]
fn fit_runs_every_optimizer_from_a_shared_start() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("fit.toml"))
        .unwrap()
        .replace("iterations = 200", "iterations = 2")
        .replace("wavelengths = [400.0, 800.0, 32]", "wavelengths = [450.0, 750.0, 3]");
    let cfg = write(tmp.path(), "fit.toml", &text);
    let out = rcwa(&["fit", cfg.to_str().unwrap(), "--seed", "4", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let firsts: Vec<Vec<String>> = ["momentum", "adagrad", "rmsprop", "adam", "radam"]
        .iter()
        .map(|a| csv_rows(&tmp.path().join(format!("fit_{a}_seed4.csv"))).remove(0))
        .collect();
    assert!(firsts.iter().all(|r| r == &firsts[0]));
    assert_eq!(csv_rows(&tmp.path().join("target_spectrum.csv")).len(), 3);
}

#[test]
fn shipped_configs_round_trip() {
    for name in ["interface.toml", "deflector.toml", "sweep.toml", "optimize.toml", "fit.toml"] {
        let a = parse_config(&configs().join(name)).unwrap();
        let b = rcwa_cli::config::parse_str(&a.to_toml().unwrap(), &a.base_dir).unwrap();
        assert_eq!(a, b, "{name}");
    }
}
