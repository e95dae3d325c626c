//! End-to-end checks of the experiment driver binary: artifact
//! idempotence, machine-readable errors and exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bmvd"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, body).unwrap();
    path
}

const QUICK: &str = "\
[model]
eps = 0.25
p = 1.0

[drift]
preset = zero

[pde]
l_leg = 2.0
l_plane = 2.0
h = 0.01
x0 = 0.0
times = 0.125, 0.25
ck_check = true

[sim]
dt = 1e-3
horizon = 0.1
n_paths = 20000
seed = 5
space = radial
window_leg = 1.5
window_plane = 1.5
bins_leg = 20
bins_plane = 20
";

fn out_dir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("bmvd-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn rerun_overwrites_byte_identical_artifacts() {
    let dir = out_dir("idem");
    let cfg = write_config(&dir, QUICK);
    for _ in 0..2 {
        for cmd in ["pde", "simulate"] {
            let status = bin()
                .args([cmd, "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(dir.join("out"))
                .status()
                .unwrap();
            assert!(status.success(), "{cmd} failed");
        }
        let status = bin()
            .args(["report", "--out"])
            .arg(dir.join("out"))
            .status()
            .unwrap();
        assert!(status.success());
    }
    let first: Vec<(String, Vec<u8>)> = ["kernel.csv", "pde_summary.json", "density.csv", "sim_summary.json", "summary.json"]
        .iter()
        .map(|n| (n.to_string(), std::fs::read(dir.join("out").join(n)).unwrap()))
        .collect();
    // run everything again and compare bytes
    for cmd in ["pde", "simulate"] {
        assert!(bin()
            .args([cmd, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join("out"))
            .status()
            .unwrap()
            .success());
    }
    assert!(bin()
        .args(["report", "--out"])
        .arg(dir.join("out"))
        .status()
        .unwrap()
        .success());
    for (name, bytes) in first {
        let again = std::fs::read(dir.join("out").join(&name)).unwrap();
        assert_eq!(bytes, again, "{name} not byte-identical across reruns");
    }
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn seed_changes_simulation_artifacts() {
    let dir = out_dir("seed");
    let cfg = write_config(&dir, QUICK);
    let run = |seed: &str, out: &str| {
        assert!(bin()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(out))
            .args(["--seed", seed])
            .status()
            .unwrap()
            .success());
        std::fs::read(dir.join(out).join("density.csv")).unwrap()
    };
    let a = run("5", "a");
    let b = run("6", "b");
    let c = run("5", "c");
    assert_ne!(a, b, "different seeds should differ");
    assert_eq!(a, c, "same seed should reproduce bytes");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn malformed_config_exits_2_with_error_json() {
    let dir = out_dir("badcfg");
    let cfg = write_config(
        &dir,
        "[model]\neps = fast\np = 1.0\n[pde]\nh = 0.01\ntimes = 0.1\n",
    );
    let output = bin()
        .args(["pde", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(parsed["error"]["kind"], "config");
    assert!(
        parsed["error"]["message"]
            .as_str()
            .unwrap()
            .contains("model.eps"),
        "message should name the key: {stderr}"
    );
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn unknown_key_is_rejected_with_line_number() {
    let dir = out_dir("unknown");
    let cfg = write_config(
        &dir,
        "[model]\neps = 0.25\np = 1.0\n[drift]\npreset = zero\n[pde]\nh = 0.01\ntimes = 0.1\nbogus_key = 3\n",
    );
    let output = bin()
        .args(["pde", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("bogus_key") && stderr.contains(":9:"), "{stderr}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn missing_config_flag_is_a_config_error() {
    let output = bin().args(["pde"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn zero_drift_battery_reports_zero_ratios() {
    let dir = out_dir("zerodrift");
    let cfg = write_config(
        &dir,
        "\
[model]
eps = 0.25
p = 1.0

[drift]
preset = zero

[bounds]
h = 0.01
t_lo = 0.1
t_hi = 0.5
n_times = 4
per_decade = 16
battery_samples = 2
battery_times = 0.05, 0.1
",
    );
    assert!(bin()
        .args(["verify-bounds", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .status()
        .unwrap()
        .success());
    let battery: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("out").join("convolution_battery.json")).unwrap(),
    )
    .unwrap();
    for regime in battery.as_array().unwrap() {
        for point in regime["curve"].as_array().unwrap() {
            assert_eq!(point[1].as_f64().unwrap(), 0.0);
        }
    }
    assert!(dir.join("out").join("bound_report_driftless.json").exists());
    let _ = std::fs::remove_dir_all(&dir);
}
