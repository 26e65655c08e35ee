use std::path::Path;
use std::process::{Command, Output};

use neurofield::table::Table;

fn neurofield(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neurofield"))
        .current_dir(dir)
        .env("NEUROFIELD_THREADS", "1")
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn solve_wave_symmetric_has_zero_speed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = neurofield(tmp.path(), &["solve-wave", "--out", "w"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let t = Table::load(&tmp.path().join("w/profile.csv")).unwrap();
    let c: f64 = t.meta_value("c").unwrap().parse().unwrap();
    assert!(c.abs() < 1e-6);
    assert!(tmp.path().join("w/profile.svg").exists());
    let manifest = String::from_utf8(read(&tmp.path().join("w/manifest.toml"))).unwrap();
    assert!(manifest.contains("status = \"done\""));
    assert!(manifest.contains("config_hash"));
}

#[test]
fn same_config_and_seed_give_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |dir: &'static str| {
        vec!["simulate-mc", "--set", "chain.sizes=[50, 100]", "--set", "harness.seed=7", "--out", dir]
    };
    for dir in ["a", "b"] {
        let out = neurofield(tmp.path(), &args(dir));
        assert_eq!(out.status.code(), Some(0));
    }
    for file in ["path_N50.csv", "path_N100.csv", "meanfield.csv", "manifest.toml"] {
        assert_eq!(read(&tmp.path().join("a").join(file)), read(&tmp.path().join("b").join(file)), "{file}");
    }
    let out = neurofield(tmp.path(), &["simulate-mc", "--set", "chain.sizes=[50, 100]", "--set", "harness.seed=8", "--out", "c"]);
    assert_eq!(out.status.code(), Some(0));
    assert_ne!(read(&tmp.path().join("a/path_N50.csv")), read(&tmp.path().join("c/path_N50.csv")));
}

#[test]
fn sequential_and_parallel_reports_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let set = ["--set", "chain.replicas=40", "--set", "harness.min_replicas=10", "--set", "chain.sizes=[50, 100, 200]"];
    let mut a = vec!["run-lln", "--out", "p"];
    a.extend(set);
    let mut b = vec!["run-lln", "--sequential", "--out", "s"];
    b.extend(set);
    neurofield(tmp.path(), &a);
    neurofield(tmp.path(), &b);
    assert_eq!(read(&tmp.path().join("p/lln.csv")), read(&tmp.path().join("s/lln.csv")));
}

#[test]
fn config_errors_exit_with_two_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let out = neurofield(tmp.path(), &["run-clt", "--set", "harness.clt.replicas=-3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("harness.clt.replicas"));

    std::fs::write(tmp.path().join("bad.toml"), "[chain]\npopulation = 3\n").unwrap();
    let out = neurofield(tmp.path(), &["--config", "bad.toml", "run-lln"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("chain.population"));
}

#[test]
fn runtime_errors_exit_with_three_and_leave_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    // symmetric threshold: standing front, no forward wave to linearize around
    let out = neurofield(tmp.path(), &["simulate-spde", "--set", "harness.continuum.kappa=0.5", "--out", "x"]);
    assert_eq!(out.status.code(), Some(3));
    let manifest = String::from_utf8(read(&tmp.path().join("x/manifest.toml"))).unwrap();
    assert!(manifest.contains("status = \"error\""));
    assert!(manifest.contains("speed"));
}

#[test]
fn small_budgets_are_inconclusive_and_report_rerenders() {
    let tmp = tempfile::tempdir().unwrap();
    let out = neurofield(tmp.path(), &["run-lln", "--set", "chain.replicas=20", "--set", "chain.sizes=[50, 100]", "--out", "l"]);
    assert_eq!(out.status.code(), Some(1));
    let dir = tmp.path().join("l");
    assert!(String::from_utf8(read(&dir.join("summary.txt"))).unwrap().contains("INCONCLUSIVE"));
    std::fs::remove_file(dir.join("lln.svg")).unwrap();
    let out = neurofield(tmp.path(), &["report", "--input", "l"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.join("lln.svg").exists());
}

#[test]
fn noise_checks_report_condition_i() {
    let tmp = tempfile::tempdir().unwrap();
    let out = neurofield(tmp.path(), &["noise-checks", "--set", "harness.noise.draws=2000", "--out", "n"]);
    let rules = String::from_utf8(read(&tmp.path().join("n/rules.csv"))).unwrap();
    assert!(rules.contains("condition_i_decreasing,true"));
    // the squared norm exceeds 1/(4 eps^2 m), so the verdict is a failure
    assert!(rules.contains("condition_i_bound,false"));
    assert_eq!(out.status.code(), Some(1));
}
