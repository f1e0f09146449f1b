use std::path::Path;
use std::process::{Command, Output};

use odgt::engine::RecordLevel;
use odgt::harness::read_trace;

fn odgt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_odgt"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ODGT_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_one_record_per_round_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let out = odgt(&["run", "--preset", "example1", "--steps", "40", "--out", "o", "--record", "full"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["trace.csv", "trace.jsonl"] {
        let (manifest, trace) = read_trace(&dir.path().join("o").join(name)).unwrap();
        assert_eq!(trace.records.len(), 41);
        assert_eq!(trace.record_level, RecordLevel::Full);
        assert_eq!(manifest.run.horizon, 40);
        assert_eq!(manifest.library, "odgt");
    }
    assert!(dir.path().join("o/manifest.json").exists());
}

#[test]
fn identical_invocations_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let names = ["trace.csv", "trace.jsonl", "manifest.json"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let o = odgt(
            &[
                "run",
                "--preset",
                "target_surrounding_desk",
                "--algorithm",
                "odgt-stochastic",
                "--seed",
                "5",
                "--steps",
                "60",
                "--out",
                "o",
            ],
            dir.path(),
        );
        assert!(o.status.success());
        runs.push(names.map(|n| std::fs::read(dir.path().join("o").join(n)).unwrap()));
    }
    for (k, name) in names.iter().enumerate() {
        assert!(runs[0][k] == runs[1][k], "{name} differs");
    }
}

#[test]
fn manifest_reruns_reproduce_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let first = odgt(
        &["run", "--preset", "quadratic_synthetic", "--steps", "30", "--stepsize", "constant", "--out", "first"],
        dir.path(),
    );
    assert!(first.status.success());
    let again = odgt(
        &["run", "--config", "first/manifest.json", "--out", "second"],
        dir.path(),
    );
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    let (m1, t1) = read_trace(&dir.path().join("first/trace.jsonl")).unwrap();
    let (_, t2) = read_trace(&dir.path().join("second/trace.jsonl")).unwrap();
    assert_eq!(t1, t2);
    assert!(matches!(
        m1.config.run.stepsize,
        odgt::engine::StepsizeSchedule::Constant { derived_from: Some(_), .. }
    ));
}

#[test]
fn metrics_writes_report_and_regret_series() {
    let dir = tempfile::tempdir().unwrap();
    assert!(odgt(&["run", "--preset", "example1", "--steps", "25", "--out", "o"], dir.path())
        .status
        .success());
    let out = odgt(&["metrics", "--trace", "o/trace.csv", "--measures", "regret,residuals"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert!(report["regret_total"].is_number());
    assert!(report["path_variation_unit"].is_null());
    assert!(report["y_residual_bound"].is_number());
    let csv = std::fs::read_to_string(dir.path().join("o/regret.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,value"));
    assert_eq!(lines.count(), 25);
}

#[test]
fn seed_fan_out_and_expectation() {
    let dir = tempfile::tempdir().unwrap();
    let out = odgt(
        &[
            "run",
            "--preset",
            "target_surrounding_desk",
            "--algorithm",
            "odgt_stochastic",
            "--seeds",
            "1,2,3",
            "--steps",
            "20",
            "--out",
            "fan",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for s in 1..=3 {
        assert!(dir.path().join(format!("fan/seed-{s}/trace.jsonl")).exists());
    }
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fan/aggregate.json")).unwrap()).unwrap();
    let out = odgt(
        &["metrics", "--trace", "fan", "--expect-over-seeds", "--out", "again"],
        dir.path(),
    );
    assert!(out.status.success());
    let recomputed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("again/aggregate.json")).unwrap()).unwrap();
    assert_eq!(written, recomputed);
    assert_eq!(written["expectation"]["seeds"], serde_json::json!([1, 2, 3]));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_odgt"))
        .args(["run", "--preset", "example1", "--steps", "3"])
        .current_dir(dir.path())
        .env("ODGT_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from-env/trace.csv").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let typo = write(dir.path(), "typo.toml", "[run]\nhorizn = 10\n");
    assert_eq!(odgt(&["run", "--config", &typo], dir.path()).status.code(), Some(2));
    assert_eq!(odgt(&["run", "--config", "missing.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(odgt(&["run", "--preset", "nope"], dir.path()).status.code(), Some(2));
    assert_eq!(odgt(&["run", "--preset", "example1", "--algorithm", "sgd"], dir.path()).status.code(), Some(2));
    assert_eq!(odgt(&["run", "--bogus-flag"], dir.path()).status.code(), Some(2));
    let corrupt = write(dir.path(), "t.csv", "# manifest: {}\nt\n0\n");
    assert_eq!(odgt(&["metrics", "--trace", &corrupt], dir.path()).status.code(), Some(2));
}

#[test]
fn invalid_schedule_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.toml",
        "[schedule]\nkind = \"static\"\nmatrix = [[0.6, 0.4], [0.6, 0.4]]\n[run]\nhorizon = 10\n",
    );
    assert_eq!(odgt(&["validate", "--config", &bad], dir.path()).status.code(), Some(3));
    assert_eq!(odgt(&["run", "--config", &bad, "--out", "o"], dir.path()).status.code(), Some(3));
    let lenient = odgt(&["run", "--config", &bad, "--out", "o", "--lenient"], dir.path());
    assert!(lenient.status.success());
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("schedule validation failed"));
    let good = odgt(&["validate", "--preset", "target_surrounding_paper"], dir.path());
    assert_eq!(good.status.code(), Some(0));
}

#[test]
fn divergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[problem]\nfamily = \"target_surrounding\"\nagents = 3\ncap = 1e300\n[run]\nhorizon = 20\n",
    );
    let out = odgt(&["run", "--config", &cfg, "--stepsize", "constant:1e300", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}

#[test]
fn presets_print_as_loadable_toml() {
    let dir = tempfile::tempdir().unwrap();
    let out = odgt(&["preset", "target_surrounding_paper"], dir.path());
    assert!(out.status.success());
    let path = write(dir.path(), "p.toml", &String::from_utf8(out.stdout).unwrap());
    let out = odgt(&["validate", "--config", &path], dir.path());
    assert!(out.status.success());
    let list = odgt(&["list"], dir.path());
    let text = String::from_utf8(list.stdout).unwrap();
    assert!(text.contains("odgt_stochastic") && text.contains("centralized_pgd"));
}
