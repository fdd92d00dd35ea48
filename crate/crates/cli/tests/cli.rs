use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kacbgk"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
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

const SPLITTING: &str = r#"{
  "mode": "splitting",
  "seed": 1,
  "n": 4000,
  "m": 4,
  "tau": 0.02,
  "epsilon": 0.001,
  "thermalization": "kac",
  "firing": "cell-density",
  "t_end": 0.1,
  "initial": { "kind": "density-wave", "amplitude": 0.2 },
  "snapshots": { "interval": 0.02 }
}"#;

#[test]
fn simulate_twice_gives_identical_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "splitting.json", SPLITTING);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "7",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (da, db) = (dir_contents(&a), dir_contents(&b));
    assert!(da.iter().any(|(n, _)| n == "snapshots.ndjson"));
    assert_eq!(da, db);
    // the seed override is echoed
    let echoed = String::from_utf8(fs::read(a.join("config.json")).unwrap()).unwrap();
    assert!(echoed.contains("\"seed\": 7"));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "splitting.json", SPLITTING);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()])
        .status
        .success());
    let echoed = a.join("config.json");
    assert!(run(&["simulate", "--config", echoed.to_str().unwrap(), "--out", b.to_str().unwrap()])
        .status
        .success());
    assert_eq!(dir_contents(&a), dir_contents(&b));
}

#[test]
fn missing_config_exits_one_with_usage() {
    let o = run(&["simulate"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn invalid_config_exits_one_and_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        r#"{ "mode": "splitting", "n": 100, "tau": 0.02, "epsilon": 0.01, "thermalization": "kac", "t_end": 0.1 }"#,
    );
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon"));

    let unknown = write_config(tmp.path(), "unknown.json", r#"{ "mode": "bgk-solve", "t_end": 0.1, "nodes": 3 }"#);
    let o = run(&["solve", "--config", unknown.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nodes"));
}

#[test]
fn mode_must_match_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SPLITTING);
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unreadable_initial_file_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "f.json",
        r#"{ "mode": "bgk-solve", "t_end": 0.01,
             "initial": { "kind": "file", "path": "/nonexistent/field.bin" },
             "solver": { "v_max": 6.0 } }"#,
    );
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn microcanonical_test_reports_four_over_pi_squared() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mc");
    let cfg = write_config(
        tmp.path(),
        "mc.json",
        r#"{ "mode": "microcanonical-test", "microcanonical": { "ks_samples": 2000 } }"#,
    );
    let o = run(&["microcanonical-test", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let first = &report["sphere_ratio"][0];
    assert_eq!(first["n"], 3);
    let exact = first["exact"].as_f64().unwrap();
    assert!((exact - 4.0 / std::f64::consts::PI.powi(2)).abs() < 1e-12);
}

#[test]
fn microcanonical_test_runs_without_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mc");
    let o = run(&["microcanonical-test", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("4/pi^2 = 0.405284734569351"));
}

#[test]
fn solve_writes_a_readable_field_dump() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "solve.json",
        r#"{ "mode": "bgk-solve", "t_end": 0.05,
             "initial": { "kind": "two-temperature-slab", "t_left": 0.5, "t_right": 1.5 },
             "solver": { "nx": 16, "m_v": 11, "dt": 0.01, "v_max": 7.5 } }"#,
    );
    let out = tmp.path().join("o");
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = fs::read(out.join("field_final.bin")).unwrap();
    assert_eq!(&bytes[..8], b"KBGKFLD1");
    // header: magic, four u64, two f64
    assert_eq!(bytes.len(), 8 + 32 + 16 + 8 * 16 * 11 * 11 * 11);

    // a dump is itself a valid initial condition
    let dump = out.join("field_final.bin");
    let cfg2 = write_config(
        tmp.path(),
        "restart.json",
        &format!(
            r#"{{ "mode": "bgk-solve", "t_end": 0.01,
                 "initial": {{ "kind": "file", "path": "{}" }},
                 "solver": {{ "nx": 16, "m_v": 11, "dt": 0.01, "v_max": 7.5 }} }}"#,
            dump.display()
        ),
    );
    let o = run(&["solve", "--config", cfg2.to_str().unwrap(), "--out", tmp.path().join("r").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_writes_a_csv_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sweep.json",
        r#"{ "mode": "sweep", "m": 2, "thermalization": "microcanonical-limit", "t_end": 0.04,
             "initial": { "kind": "density-wave", "amplitude": 0.2 },
             "solver": { "nx": 8, "m_v": 9, "dt": 0.01 },
             "snapshots": { "interval": 0.04 },
             "sweep": { "n": [200, 400], "tau": [0.02] } }"#,
    );
    let out = tmp.path().join("o");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("n,m,tau,epsilon,t,replicas,d_rho"));
    // two points, two snapshots each
    assert_eq!(lines.len(), 1 + 4);
}
