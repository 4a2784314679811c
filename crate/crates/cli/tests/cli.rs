use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn otfwi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otfwi"))
        .args(args)
        .output()
        .expect("run otfwi")
}

fn manifest(dir: &Path) -> String {
    fs::read_to_string(dir.join("manifest.txt")).unwrap()
}

fn outputs(dir: &Path) -> Vec<String> {
    manifest(dir)
        .lines()
        .filter_map(|l| l.strip_prefix("output = ").map(str::to_string))
        .collect()
}

/// Small two-shot layered scenario; `initial` sets the starting layers.
fn tiny_scenario(dir: &Path, initial: &str) -> String {
    let text = format!(
        "[model]
name = tiny
kind = layered
nz = 11
nx = 31
dz = 100
dx = 100
interfaces = 300, 600
velocities = 2, 3, 2
{initial}

[acquisition]
n_sources = 2
source_depth = 100
source_x_first = 800
source_x_last = 2200
n_receivers = 31
receiver_depth = 100
receiver_x_first = 0
receiver_spacing = 100
peak_frequency = 5
wavelet_delay = 0.24
record_length = 1.2

[inversion]
misfit = l2
max_iters = 4
c_min = 1.5
c_max = 4
frozen_depth = 200
"
    );
    let path = dir.join("tiny.txt");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_scenario_file_exits_with_configuration_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = otfwi(&[
        "simulate",
        "--scenario",
        "does/not/exist.txt",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does/not/exist.txt"));
    let m = manifest(&out);
    assert!(m.contains("status = error\n"));
    assert!(m.contains("exit_code = 2\n"));
}

#[test]
fn unknown_misfit_is_a_configuration_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let scen = tiny_scenario(tmp.path(), "");
    let o = otfwi(&[
        "invert",
        "--scenario",
        &scen,
        "--misfit",
        "l7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn uniform_monge_ampere_has_zero_distance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ma");
    let o = otfwi(&[
        "ma-solve",
        "--case",
        "uniform",
        "--n",
        "16",
        "--dump-ma",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("ma.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
    let files = outputs(&out);
    assert_eq!(files.len(), 5);
    for f in files {
        assert!(Path::new(&f).exists(), "{f}");
    }
}

#[test]
fn landscape_both_has_two_misfit_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("land");
    let o = otfwi(&[
        "landscape",
        "--misfit",
        "both",
        "--points",
        "21",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("landscape_shift.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "shift_s,l2,j3");
    assert_eq!(csv.lines().count(), 22);
}

#[test]
fn noise_study_is_reproducible_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        let o = otfwi(&[
            "noise-study",
            "--pieces",
            "4,16,64",
            "--trials",
            "3",
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(out.join("noise_study.csv")).unwrap()
    };
    let a = run("a", "5");
    assert_eq!(a, run("b", "5"));
    assert_ne!(a, run("c", "6"));
}

#[test]
fn simulate_then_invert_from_files() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tiny_scenario(tmp.path(), "");
    let sim = tmp.path().join("sim");
    let sim2 = tmp.path().join("sim2");
    for dir in [&sim, &sim2] {
        let o = otfwi(&[
            "simulate",
            "--scenario",
            &scen,
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for k in 0..2 {
        let name = format!("shot_{k:03}.bin");
        assert_eq!(
            fs::read(sim.join(&name)).unwrap(),
            fs::read(sim2.join(&name)).unwrap()
        );
    }
    for f in outputs(&sim) {
        assert!(Path::new(&f).exists(), "{f}");
    }

    let inv = tmp.path().join("inv");
    let o = otfwi(&[
        "invert",
        "--scenario",
        &scen,
        "--observed",
        sim.to_str().unwrap(),
        "--snapshot-every",
        "2",
        "--out",
        inv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let conv = fs::read_to_string(inv.join("convergence_l2.csv")).unwrap();
    assert!(conv.lines().count() >= 2);
    assert!(inv.join("model_final_l2.bin").exists());
    assert!(inv.join("model_iter_0002.bin").exists());
    for f in outputs(&inv) {
        assert!(Path::new(&f).exists(), "{f}");
    }
}

#[test]
fn mismatched_observed_gathers_name_the_shot() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tiny_scenario(tmp.path(), "");
    let sim = tmp.path().join("sim");
    let o = otfwi(&[
        "simulate",
        "--scenario",
        &scen,
        "--out",
        sim.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let other = tmp.path().join("other");
    fs::create_dir(&other).unwrap();
    fs::write(
        other.join("tiny.txt"),
        fs::read_to_string(&scen)
            .unwrap()
            .replace("n_receivers = 31", "n_receivers = 20"),
    )
    .unwrap();
    let o = otfwi(&[
        "invert",
        "--scenario",
        other.join("tiny.txt").to_str().unwrap(),
        "--observed",
        sim.to_str().unwrap(),
        "--out",
        tmp.path().join("inv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("shot 0"));
}

#[test]
fn data_from_the_initial_model_stop_immediately() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tiny_scenario(
        tmp.path(),
        "initial_interfaces = 300, 600\ninitial_velocities = 2, 3, 2",
    );
    let inv = tmp.path().join("inv");
    let o = otfwi(&[
        "invert",
        "--scenario",
        &scen,
        "--out",
        inv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&inv);
    let final_misfit: f64 = m
        .lines()
        .find_map(|l| l.strip_prefix("misfit_final = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(final_misfit < 1e-20, "{final_misfit}");
    assert!(m.contains("iterations = 0\n"), "{m}");
}
