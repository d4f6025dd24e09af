use std::path::Path;
use std::process::{Command, Output};

fn edcasim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edcasim")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn lists_every_builtin() {
    let o = edcasim(&["list-scenarios"]);
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    let names: Vec<&str> = out.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(names, ["dcf-baseline", "edca-default", "saturation", "txop-sweep", "aifs-sweep"]);
}

#[test]
fn run_writes_per_flow_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = edcasim(&["run", "--scenario", "dcf-baseline", "--stations", "2", "--duration", "1", "--reps", "2", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("dcf-baseline.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[..2], ["scenario", "rep"]);
    assert!(header.contains(&"mean_delay_ms"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // 2 reps x 2 stations x 3 flows
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.len() == header.len()));
    assert!(dir.path().join("dcf-baseline-aggregate.csv").exists());
}

#[test]
fn run_writes_json_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = edcasim(&[
        "run", "--scenario", "edca-default", "--stations", "2", "--duration", "0.2", "--reps", "1", "--format", "json",
        "--trace", "--out", out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("edca-default.json")).unwrap();
    assert!(text.trim_start().starts_with('{'));
    let trace = std::fs::read_to_string(dir.path().join("edca-default-trace.csv")).unwrap();
    assert!(trace.lines().count() > 10);
}

#[test]
fn show_scenario_output_runs_as_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = edcasim(&["show-scenario", "aifs-sweep"]);
    assert!(o.status.success());
    let cfg = dir.path().join("a.toml");
    std::fs::write(&cfg, &o.stdout).unwrap();
    let out = dir.path().join("out");
    let r = edcasim(&[
        "run", "--scenario", cfg.to_str().unwrap(), "--duration", "0.5", "--reps", "1", "--out", out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", stderr(&r));
    assert!(out.join("aifs-sweep.csv").exists());
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = edcasim(&[
        "sweep", "--base", "aifs-sweep", "--param", "aifsn", "--target", "1:vi", "--values", "2,7", "--duration", "0.5",
        "--reps", "1", "--out", out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("aifs-sweep-sweep-aifsn.csv")).unwrap();
    let values: std::collections::BTreeSet<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(values.into_iter().collect::<Vec<_>>(), ["2", "7"]);
}

fn bad_config(body: &str) -> Output {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, body).unwrap();
    edcasim(&["run", "--scenario", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
}

#[test]
fn zero_duration_is_a_config_error_with_a_line() {
    let o = bad_config("name = \"x\"\nmac_mode = \"dcf\"\nduration_s = 0\n");
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 3") && e.contains("duration_s"), "{e}");
}

#[test]
fn unknown_field_is_a_config_error() {
    let o = bad_config("name = \"x\"\nmac_mode = \"dcf\"\nduration_s = 1\nbogus = 3\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn missing_scenario_is_a_config_error() {
    let o = edcasim(&["run", "--scenario", "no-such-thing"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = Path::new(&blocker).join("sub");
    let o = edcasim(&["run", "--scenario", "dcf-baseline", "--stations", "1", "--duration", "0.1", "--reps", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
