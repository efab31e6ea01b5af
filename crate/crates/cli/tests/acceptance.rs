//! Acceptance: CLI determinism. Every command repeated with the same seed
//! must produce byte-identical outputs, and `--threads 8` must equal
//! `--threads 1`.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_basecurve")
}

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("failed to launch binary")
}

fn run_ok(args: &[&str], dir: &Path) {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

/// A small deterministic wide-format panel: three affine images of a bumpy
/// curve plus a fixed pseudo-noise pattern.
fn write_panel(path: &Path) {
    let t = 120;
    let mut csv = String::from("mz,a,b,c\n");
    for k in 0..t {
        let x = k as f64 / (t - 1) as f64;
        let m = 2.0 + (std::f64::consts::TAU * x).sin() + 0.4 * (3.0 * std::f64::consts::TAU * x).sin();
        let noise = |i: usize| 0.03 * (((k * 7 + i * 13 + 3) % 17) as f64 - 8.0) / 8.0;
        let rows = [
            m + noise(0),
            0.5 + 1.4 * m + noise(1),
            -0.2 + 0.7 * m + noise(2),
        ];
        csv.push_str(&format!("{x},{},{},{}\n", rows[0], rows[1], rows[2]));
    }
    fs::write(path, csv).unwrap();
}

fn write_sim_config(path: &Path) {
    let config = r#"{
  "n": 4,
  "t": 150,
  "sigma": 0.25,
  "curve": { "type": "sine_mix", "offset": 2.0,
             "components": [ { "amplitude": 1.0, "cycles": 1.0 } ] },
  "design": { "type": "equally_spaced", "lo": 0.0, "hi": 1.0 },
  "seed": 7,
  "replications": 10,
  "h_grid": [0.05, 0.08],
  "hstar_grid": [0.04, 0.06],
  "single_pass": true
}
"#;
    fs::write(path, config).unwrap();
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn acceptance_09_cli_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_panel(&dir.join("panel.csv"));
    write_sim_config(&dir.join("sim.json"));

    // fit: repeated run and thread-count variation.
    for (out, threads) in [("fit1.json", "1"), ("fit2.json", "1"), ("fit8.json", "8")] {
        run_ok(
            &[
                "fit",
                "--input",
                "panel.csv",
                "--h",
                "0.12",
                "--h-star",
                "0.08",
                "--ci",
                "0.95",
                "--threads",
                threads,
                "--out",
                out,
                "--curve-csv",
                &format!("{out}.curve.csv"),
            ],
            dir,
        );
    }
    let fit1 = fs::read(dir.join("fit1.json")).unwrap();
    assert_eq!(fit1, fs::read(dir.join("fit2.json")).unwrap());
    assert_eq!(fit1, fs::read(dir.join("fit8.json")).unwrap());
    let curve1 = fs::read(dir.join("fit1.json.curve.csv")).unwrap();
    assert_eq!(curve1, fs::read(dir.join("fit8.json.curve.csv")).unwrap());

    // cv: repeated run with the same seed and different thread counts.
    for (out, csv, threads) in [
        ("cv1.json", "m1.csv", "1"),
        ("cv2.json", "m2.csv", "1"),
        ("cv8.json", "m8.csv", "8"),
    ] {
        run_ok(
            &[
                "cv",
                "--input",
                "panel.csv",
                "--folds",
                "3",
                "--h-grid",
                "0.08:0.16:0.04",
                "--hstar-grid",
                "0.06,0.1",
                "--seed",
                "11",
                "--threads",
                threads,
                "--out",
                out,
                "--mspe-csv",
                csv,
            ],
            dir,
        );
    }
    let cv1 = fs::read(dir.join("cv1.json")).unwrap();
    assert_eq!(cv1, fs::read(dir.join("cv2.json")).unwrap());
    assert_eq!(cv1, fs::read(dir.join("cv8.json")).unwrap());
    let m1 = fs::read(dir.join("m1.csv")).unwrap();
    assert_eq!(m1, fs::read(dir.join("m2.csv")).unwrap());
    assert_eq!(m1, fs::read(dir.join("m8.csv")).unwrap());

    // simulate: repeated run with an explicit seed, serial vs parallel.
    for (out, threads) in [("sim1", "1"), ("sim2", "1"), ("sim8", "8")] {
        run_ok(
            &[
                "simulate",
                "--config",
                "sim.json",
                "--reps",
                "10",
                "--seed",
                "7",
                "--threads",
                threads,
                "--out",
                out,
            ],
            dir,
        );
    }
    let sim1 = read_dir_bytes(&dir.join("sim1"));
    assert_eq!(sim1, read_dir_bytes(&dir.join("sim2")));
    assert_eq!(sim1, read_dir_bytes(&dir.join("sim8")));
    assert_eq!(sim1.len(), 5);

    // register: byte-identical across runs and thread counts.
    let mut long_csv = String::from("id,mz,intensity\n");
    for k in 0..60 {
        let mz = 2000.0 + 10.0 * k as f64;
        long_csv.push_str(&format!("p1,{mz},{}\n", 1.0 + (k % 7) as f64));
        long_csv.push_str(&format!("p2,{},{}\n", mz + 3.0, 2.0 + (k % 5) as f64));
    }
    fs::write(dir.join("raw.csv"), long_csv).unwrap();
    for (out, threads) in [("reg1.csv", "1"), ("reg2.csv", "8")] {
        run_ok(
            &[
                "register",
                "--input",
                "raw.csv",
                "--reference",
                "p1",
                "--threads",
                threads,
                "--out",
                out,
            ],
            dir,
        );
    }
    let reg1 = fs::read(dir.join("reg1.csv")).unwrap();
    assert_eq!(reg1, fs::read(dir.join("reg2.csv")).unwrap());

    println!(
        "acceptance 9 (CLI determinism): PASS — fit, cv, simulate and register byte-identical \
         across repeated runs and --threads 1 vs 8"
    );
}

#[test]
fn stdout_output_equals_file_output() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_panel(&dir.join("panel.csv"));
    run_ok(
        &[
            "fit", "--input", "panel.csv", "--h", "0.12", "--h-star", "0.08", "--out", "f.json",
        ],
        dir,
    );
    let out = run(
        &[
            "fit", "--input", "panel.csv", "--h", "0.12", "--h-star", "0.08", "--out", "-",
        ],
        dir,
    );
    assert!(out.status.success());
    assert_eq!(out.stdout, fs::read(dir.join("f.json")).unwrap());
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_panel(&dir.join("panel.csv"));
    fs::write(
        dir.join("run.json"),
        r#"{ "input": "panel.csv", "h": 0.12, "h_star": 0.08, "out": "from_config.json" }"#,
    )
    .unwrap();
    run_ok(&["fit", "--config", "run.json"], dir);
    assert!(dir.join("from_config.json").exists());

    // The explicit flag overrides the config's h; outputs must differ.
    run_ok(
        &["fit", "--config", "run.json", "--h", "0.2", "--out", "flagged.json"],
        dir,
    );
    let a: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("from_config.json")).unwrap()).unwrap();
    let b: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("flagged.json")).unwrap()).unwrap();
    assert_eq!(a["h"], serde_json::json!(0.12));
    assert_eq!(b["h"], serde_json::json!(0.2));
}
