use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn lrep(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrep"))
        .args(args)
        .current_dir(dir)
        .env_remove("LREP_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

const Z3: &str = r#"{"space": {"torus": [3]}, "kernel": {"offsets": [[1, 0.5], [-1, 0.5]]},
    "mode": "exact", "initial": {"shell": 2}}"#;

#[test]
fn stationary_on_small_ring_is_uniform() {
    let d = TempDir::new().unwrap();
    let c = write_config(d.path(), "z3.json", Z3);
    let out = lrep(&["exact", "--config", &c, "--output", "run"], d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(d.path().join("run/stationary.csv")).unwrap();
    let probs: Vec<f64> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(probs.len(), 3);
    for p in probs {
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
    }
    for f in ["generator.txt", "resolved_config.json", "manifest.json", "summary.json"] {
        assert!(d.path().join("run").join(f).exists(), "{f}");
    }
}

#[test]
fn bad_row_sum_is_a_validation_error() {
    let d = TempDir::new().unwrap();
    let c = write_config(
        d.path(),
        "bad.json",
        r#"{"space": {"torus": [2]}, "kernel": {"matrix": [[0, 1], [0.5, 0]]},
            "mode": "rates", "initial": {"bitstring": "10"}}"#,
    );
    let out = lrep(&["rates", "--config", &c, "--output", "run"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row"));
    assert!(!d.path().join("run").exists());
}

#[test]
fn unknown_key_is_rejected() {
    let d = TempDir::new().unwrap();
    let c = write_config(d.path(), "x.json", r#"{"mode": "exact", "horizn": 2}"#);
    let out = lrep(&["experiment", "--config", &c], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizn"));
}

#[test]
fn unknown_criterion_is_rejected() {
    let d = TempDir::new().unwrap();
    let out = lrep(&["acceptance", "--criteria", "99", "--output", "run"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.path().join("run").exists());
}

#[test]
fn acceptance_subset_writes_one_row_each() {
    let d = TempDir::new().unwrap();
    let out = lrep(&["acceptance", "--criteria", "2,5", "--output", "run"], d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("criterion  2 PASS") && stdout.contains("criterion  5 PASS"), "{stdout}");
    let csv = fs::read_to_string(d.path().join("run/acceptance.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn fault_injection_fails_with_exit_one() {
    let d = TempDir::new().unwrap();
    let out = lrep(&["acceptance", "--criteria", "3", "--fault-injection", "--output", "run"], d.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("criterion  3 FAIL"));
    // a failing report is still a complete report
    assert!(d.path().join("run/acceptance.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let d = TempDir::new().unwrap();
    let c = write_config(
        d.path(),
        "pair.json",
        r#"{"space": {"torus": [6]}, "kernel": {"offsets": [[1, 0.7], [-1, 0.3]]}, "mode": "couple",
            "initial": {"pair": {"eta": "110100", "xi": "011001"}}, "replicas": 50, "horizon": 2, "seed": 4}"#,
    );
    for (run, jobs) in [("a", "1"), ("b", "3")] {
        let out = lrep(&["--jobs", jobs, "couple", "--config", &c, "--output", run], d.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["coupled_rates.csv", "ordered.csv", "pair_trajectory.csv", "summary.json"] {
        assert_eq!(fs::read(d.path().join("a").join(f)).unwrap(), fs::read(d.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn simulate_seed_flag_changes_the_run() {
    let d = TempDir::new().unwrap();
    let c = write_config(
        d.path(),
        "sim.json",
        r#"{"space": {"torus": [10]}, "kernel": {"offsets": [[1, 0.5], [-2, 0.5]]}, "mode": "simulate",
            "initial": {"bernoulli": 0.4}, "replicas": 4}"#,
    );
    for (dir, seed) in [("a", "1"), ("b", "1"), ("c", "2")] {
        assert!(lrep(&["simulate", "--config", &c, "--seed", seed, "--output", dir], d.path()).status.success());
    }
    let read = |p: &str| fs::read_to_string(d.path().join(p).join("events.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    assert!(read("a").starts_with("replica,time,site,ring,outcome,target\n"));
}

#[test]
fn output_dir_from_environment() {
    let d = TempDir::new().unwrap();
    let c = write_config(d.path(), "z3.json", Z3);
    let out = Command::new(env!("CARGO_BIN_EXE_lrep"))
        .args(["exact", "--config", &c])
        .current_dir(d.path())
        .env("LREP_OUTPUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.path().join("from-env/stationary.csv").exists());
}

#[test]
fn not_computable_exits_three() {
    let d = TempDir::new().unwrap();
    let c = write_config(
        d.path(),
        "nc.json",
        r#"{"space": {"segment": {"lo": 0, "hi": 5, "boundary": "occupied-exterior"}},
            "kernel": {"offsets": [[2, 0.5], [-1, 0.5]]}, "mode": "rates", "initial": {"bitstring": "111111"}}"#,
    );
    let out = lrep(&["rates", "--config", &c, "--site", "5", "--output", "run"], d.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!d.path().join("run").exists());
}
