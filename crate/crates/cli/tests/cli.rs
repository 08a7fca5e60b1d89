//! End-to-end tests of the `strichartz-lab` binary: exit codes, output
//! files, determinism across config dialects and thread counts, and the
//! schema-vs-numerical failure split.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_strichartz-lab")
}

/// Run the binary with a clean default-output environment so a stray
/// STRICHARTZ_LAB_OUT in the test runner cannot leak in.
fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("STRICHARTZ_LAB_OUT")
        .output()
        .expect("binary launches")
}

fn run_with_env(args: &[&str], key: &str, value: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("STRICHARTZ_LAB_OUT")
        .env(key, value)
        .output()
        .expect("binary launches")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_cfg(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

const SWEEP_KV: &str = "d=1\nalpha=2\np=4\nq=2\nNs=4,8,16\n";
const SWEEP_JSON: &str =
    "{\n  \"d\": 1,\n  \"alpha\": 2,\n  \"p\": 4,\n  \"q\": 2,\n  \"Ns\": [4, 8, 16]\n}\n";

#[test]
fn sweep_outputs_are_deterministic_across_config_dialects_and_reruns() {
    let dir = TempDir::new().unwrap();
    let kv = write_cfg(&dir, "kv.cfg", SWEEP_KV);
    let js = write_cfg(&dir, "js.cfg", SWEEP_JSON);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");

    for (cfg, out) in [(&kv, &out_a), (&js, &out_b), (&kv, &out_c)] {
        let res = run(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&res), 0, "stderr: {}", String::from_utf8_lossy(&res.stderr));
    }

    let csv = read(&out_a.join("sweep.csv"));
    assert_eq!(csv, read(&out_b.join("sweep.csv")), "JSON dialect changed the CSV");
    assert_eq!(csv, read(&out_c.join("sweep.csv")), "rerun changed the CSV");
    let sidecar = read(&out_a.join("sweep.json"));
    assert_eq!(sidecar, read(&out_b.join("sweep.json")));
    assert_eq!(sidecar, read(&out_c.join("sweep.json")));

    // header + one row per cutoff + the fitted slope row
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("N (lattice cutoff"));
    assert!(lines[4].starts_with("slope,,,"));

    let parsed: serde_json::Value = serde_json::from_str(&sidecar).unwrap();
    assert_eq!(parsed["experiment"], "sweep");
    assert_eq!(parsed["config"]["Ns"], "4,8,16");
    assert_eq!(parsed["failures"].as_array().unwrap().len(), 0);
    assert!(parsed["toolkit_version"].is_string());
}

#[test]
fn thread_count_does_not_change_output_bytes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_cfg(&dir, "sweep.cfg", SWEEP_KV);
    let out_one = dir.path().join("one");
    let out_two = dir.path().join("two");
    for (threads, out) in [("1", &out_one), ("3", &out_two)] {
        let res = run(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert_eq!(code(&res), 0);
    }
    assert_eq!(read(&out_one.join("sweep.csv")), read(&out_two.join("sweep.csv")));
    assert_eq!(read(&out_one.join("sweep.json")), read(&out_two.join("sweep.json")));
}

#[test]
fn env_var_supplies_the_default_output_directory() {
    let dir = TempDir::new().unwrap();
    let cfg = write_cfg(&dir, "sweep.cfg", SWEEP_KV);
    let out = dir.path().join("from_env");
    let res = run_with_env(
        &["sweep", "--config", cfg.to_str().unwrap()],
        "STRICHARTZ_LAB_OUT",
        &out,
    );
    assert_eq!(code(&res), 0);
    assert!(out.join("sweep.csv").is_file());
    assert!(out.join("sweep.json").is_file());
}

#[test]
fn unknown_config_key_exits_2_and_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let cfg = write_cfg(&dir, "bad.cfg", "d=1\nN=4\nwavelength=5\n");
    let out = dir.path().join("never");
    let res = run(&[
        "dyadic",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("wavelength"));
    assert!(!out.exists(), "schema failure must not create the output directory");
}

#[test]
fn missing_required_key_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_cfg(&dir, "partial.cfg", "alpha=2\np=4\nq=2\nNs=4,8,16\n");
    let res = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("d"));
}

#[test]
fn malformed_config_text_exits_2() {
    let dir = TempDir::new().unwrap();
    for body in ["{ this is not json", "just words\n", "a=1\na=2\n"] {
        let cfg = write_cfg(&dir, "broken.cfg", body);
        let res = run(&["sweep", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code(&res), 2, "config body {body:?}");
    }
}

#[test]
fn missing_config_flag_or_file_is_reported() {
    let res = run(&["sweep"]);
    assert_eq!(code(&res), 2);

    let res = run(&["sweep", "--config", "/no/such/file.cfg"]);
    assert_eq!(code(&res), 4);
}

#[test]
fn output_path_colliding_with_a_file_exits_4() {
    let dir = TempDir::new().unwrap();
    let cfg = write_cfg(&dir, "sweep.cfg", SWEEP_KV);
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "occupied").unwrap();
    let res = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        blocker.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 4);
}

#[test]
fn under_resolved_dispersive_grid_exits_2_without_output() {
    // N = 2 leaves only 17 usable time slices; the ratio needs 32
    let dir = TempDir::new().unwrap();
    let cfg = write_cfg(&dir, "disp.cfg", "d=1\nNs=2,4\n");
    let out = dir.path().join("never");
    let res = run(&[
        "dispersive",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 2);
    assert!(!out.exists());
}

#[test]
fn hartree_monitor_rows_cover_the_trajectory() {
    let dir = TempDir::new().unwrap();
    let cfg = write_cfg(
        &dir,
        "hart.cfg",
        "d=1\nN=2\na=0.5\ndt=0.01\nT=0.05\nmonitor=1\n",
    );
    let out = dir.path().join("out");
    let res = run(&[
        "hartree",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "stderr: {}", String::from_utf8_lossy(&res.stderr));

    let csv = read(&out.join("hartree.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    // header + states at t = 0.00, 0.01, ..., 0.05
    assert_eq!(lines.len(), 7);
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first.len(), 8, "time, two masses, gram, energy, trace, two truncations");
    assert_eq!(first[0].parse::<f64>().unwrap(), 0.0);

    let sidecar: serde_json::Value = serde_json::from_str(&read(&out.join("hartree.json"))).unwrap();
    assert!(sidecar["report"]["max_gram_deviation"].as_f64().unwrap() < 1e-8);
    assert!(sidecar["report"]["energy_drift"].as_f64().unwrap() < 1e-6);
}

#[test]
fn diverging_picard_run_exits_3_but_still_writes_outputs() {
    // near the integrability limit the potential's zero mode is huge and
    // the fixed-point iteration blows through the divergence guard
    let dir = TempDir::new().unwrap();
    let cfg = write_cfg(
        &dir,
        "pic.cfg",
        "d=1\nN=2\na=0.9999\ndt=0.01\nT=0.05\nscheme=picard\n",
    );
    let out = dir.path().join("out");
    let res = run(&[
        "hartree",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 3, "stderr: {}", String::from_utf8_lossy(&res.stderr));

    let csv = read(&out.join("hartree.csv"));
    assert_eq!(csv.lines().count(), 1, "only the header survives a failed evolve");
    let sidecar: serde_json::Value = serde_json::from_str(&read(&out.join("hartree.json"))).unwrap();
    let failures = sidecar["failures"].as_array().unwrap();
    assert_eq!(failures.len(), 1);
    assert!(failures[0]["error"].as_str().unwrap().contains("divergence"));
}

#[test]
fn endpoint_emits_one_row_per_trial() {
    let dir = TempDir::new().unwrap();
    let cfg = write_cfg(&dir, "ep.cfg", "d=1\nN=4\ntrials=3\nseed=11\n");
    let out = dir.path().join("out");
    let res = run(&[
        "endpoint",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0);
    let csv = read(&out.join("endpoint.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    for (i, line) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0].parse::<u64>().unwrap(), 11 + i as u64);
        let residual: f64 = fields[5].parse().unwrap();
        let total: f64 = fields[1].parse().unwrap();
        assert!(residual <= 1e-8 * (1.0 + total));
    }
}

#[test]
fn config_seed_overrides_the_seed_flag() {
    let dir = TempDir::new().unwrap();
    let pinned = write_cfg(&dir, "pinned.cfg", "d=1\nN=4\nseed=9\n");
    let free = write_cfg(&dir, "free.cfg", "d=1\nN=4\n");
    let out_pinned = dir.path().join("pinned");
    let out_flag = dir.path().join("flag");
    let out_both = dir.path().join("both");

    // flag alone sets the stream; a config seed beats the flag
    for (cfg, out, seed) in [
        (&pinned, &out_pinned, "5"),
        (&free, &out_flag, "9"),
        (&free, &out_both, "5"),
    ] {
        let res = run(&[
            "endpoint",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(code(&res), 0);
    }
    let pinned_csv = read(&out_pinned.join("endpoint.csv"));
    let flag_csv = read(&out_flag.join("endpoint.csv"));
    let both_csv = read(&out_both.join("endpoint.csv"));
    assert_eq!(pinned_csv, flag_csv, "seed=9 via config and via flag must agree");
    assert_ne!(flag_csv, both_csv, "different default seed must move the rows");
}

#[test]
fn duality_rows_carry_tiny_pairing_residuals() {
    let dir = TempDir::new().unwrap();
    let cfg = write_cfg(
        &dir,
        "dual.cfg",
        "d=1\nN=4\np=4\nq=2\nalpha=2\ntrials=2\n",
    );
    let out = dir.path().join("out");
    let res = run(&[
        "duality",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0);
    let csv = read(&out.join("duality.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        let residual: f64 = fields[3].parse().unwrap();
        assert!(residual < 1e-10, "pairing residual {residual}");
    }
}

#[test]
fn dyadic_profile_ends_with_a_slope_row() {
    let dir = TempDir::new().unwrap();
    let cfg = write_cfg(&dir, "dy.cfg", "d=1\nN=4\n");
    let out = dir.path().join("out");
    let res = run(&[
        "dyadic",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0);
    let csv = read(&out.join("dyadic.csv"));
    let last = csv.lines().last().unwrap();
    assert!(last.starts_with("slope,,,"));
    let slope: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!(slope.is_finite());
}
