use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ferulam_core::export::{
    read_census_csv, read_counterexample_csv, read_decomposition_csv, read_drift_csv, read_drift_scaling_csv,
    read_orbit_csv, read_recurrence_csv,
};

fn ferulam(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ferulam"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("FERULAM_OUT")
        .output()
        .expect("binary runs")
}

/// Small sections so every command finishes quickly in debug builds.
const SMALL: &str = r#"{
  "forcing": "standard-two-mode",
  "seed": 7,
  "simulate": {"omega": [0.25, 0.5], "t0": 0.0, "e0": 150.0, "n_max": 300},
  "census": {"n_omega": 3, "n_orbits": 40, "n_max": 400},
  "drift": {"energies": [100.0, 1000.0, 10000.0], "n_per_energy": 200, "calibration_samples": 300, "check_samples": 500},
  "decompose": {"n": 5000, "n_random": 4}
}"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.json");
    fs::write(&path, text).unwrap();
    path
}

fn sorted_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

const COMMANDS: [&str; 5] = ["simulate", "census", "drift", "decompose", "counterexample"];

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let cfg = cfg.to_str().unwrap();
    for cmd in COMMANDS {
        let runs: Vec<_> = ["1", "4", "4"]
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let out = tmp.path().join(format!("{cmd}-{i}"));
                let o = ferulam(&[cmd, "--config", cfg, "--workers", w], &out);
                assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
                sorted_files(&out)
            })
            .collect();
        assert!(!runs[0].is_empty());
        assert_eq!(runs[0], runs[1], "{cmd}: 1 vs 4 workers");
        assert_eq!(runs[1], runs[2], "{cmd}: rerun");
    }
}

#[test]
fn emitted_files_reparse() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    for cmd in COMMANDS {
        let o = ferulam(&[cmd, "--config", cfg.to_str().unwrap()], &out);
        assert!(o.status.success(), "{cmd}");
    }
    let open = |name: &str| File::open(out.join(name)).unwrap();
    let orbit = read_orbit_csv(open("orbit.csv")).unwrap();
    assert_eq!(orbit.len(), 301);
    assert_eq!(orbit[0].e, 150.0);
    assert_eq!(read_census_csv(open("census.csv")).unwrap().len(), 3 * 4);
    let rec: usize = read_recurrence_csv(open("recurrence.csv")).unwrap().iter().map(|r| r.count).sum();
    assert_eq!(rec, 120);
    assert_eq!(read_drift_csv(open("drift.csv")).unwrap().len(), 500);
    assert_eq!(read_drift_scaling_csv(open("drift_scaling.csv")).unwrap().len(), 3);
    assert_eq!(read_decomposition_csv(open("decompose.csv")).unwrap().len(), 4);
    let ce = read_counterexample_csv(open("counterexample.csv")).unwrap();
    assert_eq!(ce.len(), 5);
    assert!((ce[2].t - ce[3].t).abs() < 1e-9 && (ce[2].v - ce[3].v).abs() < 1e-9);
    for name in ["simulate", "census", "drift", "decompose", "counterexample"] {
        let v: serde_json::Value = serde_json::from_reader(open(&format!("{name}.json"))).unwrap();
        assert_eq!(v["command"], name);
        assert_eq!(v["seed"], 7);
        assert_eq!(v["config"]["seed"], 7);
        assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    }
    for name in ["orbit.svg", "census.svg"] {
        let svg = fs::read_to_string(out.join(name)).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("</svg>"));
    }
}

#[test]
fn standard_spec_orbit_has_n_max_plus_one_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"forcing": "standard", "simulate": {"e0": 100.0, "n_max": 1000}}"#,
    );
    let out = tmp.path().join("o");
    let o = ferulam(&["simulate", "--config", cfg.to_str().unwrap()], &out);
    assert!(o.status.success());
    let rows = read_orbit_csv(File::open(out.join("orbit.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1001);
    assert!(rows.iter().skip(1).all(|r| r.residual.abs() < 1e-11));
    let text = fs::read_to_string(out.join("orbit.csv")).unwrap();
    // 17 significant digits in scientific notation
    assert!(text.lines().nth(1).unwrap().contains("1.0000000000000000e2"));
}

#[test]
fn constant_forcing_gives_flat_energy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"forcing": "constant", "simulate": {"e0": 12.5, "n_max": 50}}"#);
    let out = tmp.path().join("o");
    assert!(ferulam(&["simulate", "--config", cfg.to_str().unwrap()], &out).status.success());
    let rows = read_orbit_csv(File::open(out.join("orbit.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 51);
    assert!(rows.iter().all(|r| r.e == 12.5));
}

#[test]
fn inline_and_file_forcing() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = r#"{"nu": [1.0, 1.4142135623730951], "c0": 2.0, "modes": [{"k": [1, 0], "a": 0.1, "b": 0.0}]}"#;
    fs::write(tmp.path().join("spec.json"), spec).unwrap();
    let by_file = write_config(tmp.path(), r#"{"forcing": "spec.json", "simulate": {"n_max": 20}}"#);
    let a = tmp.path().join("a");
    assert!(ferulam(&["simulate", "--config", by_file.to_str().unwrap()], &a).status.success());
    let inline = tmp.path().join("inline.json");
    fs::write(&inline, format!(r#"{{"forcing": {spec}, "simulate": {{"n_max": 20}}}}"#)).unwrap();
    let b = tmp.path().join("b");
    assert!(ferulam(&["simulate", "--config", inline.to_str().unwrap()], &b).status.success());
    assert_eq!(fs::read(a.join("orbit.csv")).unwrap(), fs::read(b.join("orbit.csv")).unwrap());
}

#[test]
fn seed_flag_overrides_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"seed": 3, "decompose": {"n": 2000, "n_random": 2}}"#);
    let run = |seed: Option<&str>, name: &str| {
        let out = tmp.path().join(name);
        let mut args = vec!["decompose", "--config", cfg.to_str().unwrap()];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        assert!(ferulam(&args, &out).status.success());
        let v: serde_json::Value = serde_json::from_reader(File::open(out.join("decompose.json")).unwrap()).unwrap();
        (v["seed"].as_u64().unwrap(), v["config_hash"].as_str().unwrap().to_owned())
    };
    let (file_seed, h1) = run(None, "a");
    let (flag_seed, h2) = run(Some("11"), "b");
    assert_eq!((file_seed, flag_seed), (3, 11));
    assert_ne!(h1, h2);
}

#[test]
fn env_var_overrides_out_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let env_dir = tmp.path().join("env");
    let flag_dir = tmp.path().join("flag");
    let o = Command::new(env!("CARGO_BIN_EXE_ferulam"))
        .args(["counterexample", "--out"])
        .arg(&flag_dir)
        .env("FERULAM_OUT", &env_dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_dir.join("counterexample.csv").is_file());
    assert!(!flag_dir.exists());
}

#[test]
fn malformed_json_reports_line_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "{\n  \"seed\": 1,\n  \"simulate\": {\"n_max\": }\n}");
    let o = ferulam(&["simulate", "--config", cfg.to_str().unwrap()], &tmp.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("run.json:3:"), "{err}");
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"simulate": {"n_max": 10, "bogus": 1}}"#,
        r#"{"forcing": "no-such-file.json"}"#,
        r#"{"census": {"e0_range": [1.0, 5.0]}}"#,
        r#"{"forcing": {"nu": [1.0, 1.0], "c0": 2.0, "modes": [{"k": [1, -1], "a": 0.1, "b": 0.0}]}}"#,
        r#"{"simulate": {"omega": [0.1], "n_max": 5}}"#,
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), text);
        let o = ferulam(&["validate", "--config", cfg.to_str().unwrap()], &tmp.path().join("o"));
        assert_eq!(o.status.code(), Some(2), "case {i}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = ferulam(&["census", "--workers", "0"], &tmp.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
    let o = ferulam(&["census", "--seed", "minus-one"], &tmp.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = ferulam(&["counterexample"], &blocker);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn counterexample_prints_pair_and_difference() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ferulam(&["counterexample"], &tmp.path().join("o"));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("max_difference"));
    for label in ["preimage_1", "preimage_2", "image_1", "image_2"] {
        assert!(text.contains(label));
    }
}

#[test]
fn validate_prints_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ferulam(&["validate"], &tmp.path().join("o"));
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["v_star"]["bound"].as_f64().unwrap() > 2.0);
    let e_inj = v["injectivity_energy"].as_f64().unwrap();
    assert!(e_inj > 0.0 && e_inj <= v["energy_threshold"].as_f64().unwrap());
    assert!(!tmp.path().join("o").exists());
}
