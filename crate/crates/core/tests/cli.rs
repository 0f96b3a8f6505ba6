use std::fs;
use std::path::Path;
use std::process::Command;

fn varint(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_varint"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn varint")
}

fn summary_value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing"))
        .to_string()
}

#[test]
fn run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("e07.cfg"),
        "problem = kepler\ne = 0.7\nintegrator = epavi\nh0 = 0.01\n",
    )
    .unwrap();
    for out in ["a", "b"] {
        let o = varint(dir.path(), &["run", "--config", "e07.cfg", &format!("out={out}")]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "trajectory.csv",
        "energy_error.csv",
        "traj_error.csv",
        "stats.csv",
        "config.txt",
    ] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical runs");
    }
    let summary = fs::read_to_string(dir.path().join("a/summary.txt")).unwrap();
    assert_eq!(summary_value(&summary, "status"), "ok");
    assert!(summary_value(&summary, "max_energy_error").parse::<f64>().unwrap() < 1e-12);
    assert!(dir.path().join("a/plot.py").exists());
}

#[test]
fn overrides_follow_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), "e = 0.1\nintegrator = avi1\n").unwrap();
    let o = varint(
        dir.path(),
        &["run", "--config", "c.cfg", "integrator=avi2", "h0=0.01", "out=r"],
    );
    assert!(o.status.success());
    let summary = fs::read_to_string(dir.path().join("r/summary.txt")).unwrap();
    assert_eq!(summary_value(&summary, "integrator"), "avi2");
    assert!(summary_value(&summary, "delta_a").parse::<f64>().unwrap() > 0.0);
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "integrator=rk4"],
        vec!["run", "bogus=1"],
        vec!["run", "digits=40"],
        vec!["run", "--config", "missing.cfg"],
        vec!["suite", "fig9"],
    ] {
        let o = varint(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn numerical_failure_exits_with_1_and_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = varint(dir.path(), &["run", "e=0.7", "max_steps=5", "out=p"]);
    assert_eq!(o.status.code(), Some(1));
    let summary = fs::read_to_string(dir.path().join("p/summary.txt")).unwrap();
    assert_eq!(summary_value(&summary, "status"), "failed");
    assert_eq!(summary_value(&summary, "steps"), "5");
    let rows = fs::read_to_string(dir.path().join("p/trajectory.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 7);
}

#[test]
fn list_names_everything() {
    let dir = tempfile::tempdir().unwrap();
    let o = varint(dir.path(), &["list"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in [
        "epavi",
        "avi1",
        "avi2",
        "midpoint_fixed",
        "reference",
        "fig_e07",
        "bea_orders",
        "pendulum",
    ] {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn comparison_suite_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = varint(dir.path(), &["suite", "fig_e07", "--out", "s", "--workers", "2"]);
    assert!(o.status.success());
    let table = fs::read_to_string(dir.path().join("s/fig_e07/comparison.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    let epavi = rows.iter().find(|r| r.starts_with("epavi,")).unwrap();
    let mean: f64 = epavi.split(',').nth(8).unwrap().parse().unwrap();
    assert!((mean - 6.22).abs() < 0.05, "{mean}");
    for m in ["epavi", "avi1", "avi2"] {
        assert!(dir.path().join("s/fig_e07").join(m).join("trajectory.csv").exists());
    }
}

#[test]
fn extended_precision_run_formats_more_digits() {
    let dir = tempfile::tempdir().unwrap();
    let o = varint(dir.path(), &["run", "digits=20", "h0=0.01", "out=x"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("x/trajectory.csv")).unwrap();
    let first_q = csv.lines().nth(1).unwrap().split(',').nth(2).unwrap();
    let mantissa = first_q
        .split('e')
        .next()
        .unwrap()
        .trim_start_matches('-')
        .replace('.', "");
    assert_eq!(mantissa.len(), 20, "{first_q}");
}
