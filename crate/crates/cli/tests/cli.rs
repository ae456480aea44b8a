use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_threshold-scope"))
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).env("THRESHOLD_SCOPE_THREADS", "2").output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn classify_reports_the_documented_keys() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["classify", "--json", "--grid-n", "8"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    for k in ["rank_s1", "rank_s2", "class", "eps_rank", "margins", "lambda0", "b0_min_eigenvalue", "config_hash"] {
        assert!(v.get(k).is_some(), "missing {k}");
    }
    assert_eq!(v["class"], "regular");
    assert_eq!(v["rank_s1"], 0);
    let on_disk: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("classify.json")).unwrap()).unwrap();
    assert_eq!(on_disk, v);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"potential": {"kind": "square_well", "depth": 1, "radius": 1}, "critical": {"method": "grid", "bracket": [1, 4]}, "grid": {"n": 8, "L": 3}, "time": {"t_min": 50, "t_max": 800, "samples": 5}, "sample_pairs": 10}"#);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["theorem-check", "--config", cfg.to_str().unwrap()], out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["theorem_check.csv", "theorem_check.json", "theorem_check.svg"] {
        assert_eq!(std::fs::read_to_string(a.join(f)).unwrap(), std::fs::read_to_string(b.join(f)).unwrap(), "{f} differs");
    }
    let csv = std::fs::read_to_string(a.join("theorem_check.csv")).unwrap();
    assert!(csv.starts_with("t,D_t,Ft_sup\n"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"no_such_field": 3}"#);
    assert_eq!(run(&["classify", "--config", cfg.to_str().unwrap()], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["classify", "--grid-n", "1"], dir.path()).status.code(), Some(1));
    let o = bin().args(["classify", "--grid-n", "6"]).arg("--out").arg(dir.path()).env("THRESHOLD_SCOPE_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    // default absorber is wider than the default box
    assert_eq!(run(&["evolve"], dir.path()).status.code(), Some(1));
}

#[test]
fn tune_finds_the_square_well_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["tune", "--json"], dir.path());
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let c = v["c_star"].as_f64().unwrap();
    assert!((c - std::f64::consts::PI.powi(2) / 4.0).abs() < 1e-7, "{c}");
}

#[test]
fn laurent_csv_for_a_regular_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["laurent", "--grid-n", "8"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("laurent.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("lambda,inverse_norm,c_minus2_norm,c_minus1_norm,remainder_norm"));
    for l in lines {
        let cells: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells[2], 0.0);
        assert_eq!(cells[3], 0.0);
    }
}

#[test]
fn short_evolution_window_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"potential": {"kind": "square_well", "depth": 0, "radius": 1}, "grid": {"n": 16, "L": 8}, "time": {"t_min": 1, "t_max": 2, "samples": 4}, "evolve": {"absorber": null}}"#);
    assert_eq!(run(&["evolve", "--config", cfg.to_str().unwrap()], dir.path()).status.code(), Some(4));
}
