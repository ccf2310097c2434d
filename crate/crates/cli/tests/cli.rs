use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use regcensus::pipeline::RunReport;

const SALT_B64: &str = "Y2xpLXRlc3Qtc2FsdC0wMTIzNDU2Nzg5";

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn regcensus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regcensus"))
        .args(args)
        .env("REGCENSUS_SALT", SALT_B64)
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, scenario_toml: &str) -> PathBuf {
    let config = dir.join("scenario.toml");
    std::fs::write(&config, scenario_toml).unwrap();
    let out = dir.join("scenario");
    let o = regcensus(&["synth", "--config", path(&config), "--out-dir", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("run.toml")
}

#[test]
fn rank_counts_matches_golden_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = regcensus(&[
        "rank",
        "--counts",
        path(&fixture("published_counts.json")),
        "--out-dir",
        path(dir.path()),
    ]);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("Best: F1-4 on 2019"));
    let tables = std::fs::read_to_string(dir.path().join("tables.txt")).unwrap();
    let golden = std::fs::read_to_string(fixture("published_tables_golden.txt")).unwrap();
    assert_eq!(tables, golden);

    let again = regcensus(&["rank", "--report", path(&dir.path().join("report.json"))]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), stdout);
}

#[test]
fn perfect_world_run_has_full_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let run_toml = synth(dir.path(), "population_size = 200\n");
    let out = dir.path().join("out");
    let o = regcensus(&["run", "--config", path(&run_toml), "--out-dir", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().contains("Ranking (1 = best on a measure)"));
    let report = RunReport::load(&out.join("report.json")).unwrap();
    assert!(!report.candidates.is_empty());
    for c in &report.candidates {
        assert_eq!(c.report.coverage_rate, 1.0, "{}", c.label);
    }

    let o = regcensus(&["report", "--config", path(&run_toml), "--out-dir", path(&out)]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains("report: up to date"));
}

#[test]
fn f5_on_one_register_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let run_toml = synth(dir.path(), "population_size = 30\nyears = [2019]\n");
    let text = std::fs::read_to_string(&run_toml).unwrap().replace(
        "frameworks = [\"F1\", \"F2\", \"F3\", \"F4\"]\n",
        "frameworks = [\"F1\", \"F5\"]\n",
    );
    std::fs::write(&run_toml, text).unwrap();
    let o = regcensus(&["run", "--config", path(&run_toml), "--out-dir", path(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert!(stderr.contains("F5 requires ≥2 registers"), "{stderr}");
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = regcensus(&["run", "--config", path(&missing), "--out-dir", path(dir.path())]);
    assert_eq!(o.status.code(), Some(4));

    let run_toml = synth(dir.path(), "population_size = 10\n");
    let out = dir.path().join("out");
    let o = regcensus(&["run", "--config", path(&run_toml), "--out-dir", path(&out), "--stages", "load"]);
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_regcensus"))
        .args(["run", "--config", path(&run_toml), "--out-dir", path(&out)])
        .env_remove("REGCENSUS_SALT")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("REGCENSUS_SALT"));
}

#[test]
fn stage_subcommand_stops_at_that_stage() {
    let dir = tempfile::tempdir().unwrap();
    let run_toml = synth(dir.path(), "population_size = 20\n");
    let out = dir.path().join("out");
    let o = regcensus(&["integrate", "--config", path(&run_toml), "--out-dir", path(&out)]);
    assert!(o.status.success());
    assert!(out.join("integrated/pooled.json").is_file());
    assert!(!out.join("report.json").exists());
}
