use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use esbb_bench::report::list_files;

const TINY: &str = "\
# two arms, three runs each
name = tiny
runs = 3
iterations = 5
post_eval_replications = 5
strategies = generic, parallel
";

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_esbb-bench")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("tiny.conf");
    fs::write(&path, body).unwrap();
    path
}

fn run_ok(args: &[&str]) -> String {
    let out = bench(args);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn two_arms_three_runs_file_count() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let stdout = run_ok(&["--experiment", conf.to_str().unwrap(), "--out", out.to_str().unwrap(), "--no-svg"]);
    assert!(stdout.contains("experiment: tiny"));
    let files = list_files(&out.join("tiny")).unwrap();
    let traces = files.iter().filter(|p| p.starts_with("traces")).count();
    assert_eq!(traces, 6);
    assert_eq!(files.len(), 8, "{files:?}");
    assert!(files.contains(&PathBuf::from("aggregate.csv")));
    assert!(files.contains(&PathBuf::from("summary.txt")));
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), TINY);
    let mut snapshots = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("out{k}"));
        run_ok(&["--experiment", conf.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        let root = out.join("tiny");
        let files = list_files(&root).unwrap();
        snapshots.push(files.iter().map(|p| (p.clone(), fs::read(root.join(p)).unwrap())).collect::<Vec<_>>());
    }
    assert_eq!(snapshots[0], snapshots[1]);
}

#[test]
fn trace_schema() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    run_ok(&["--experiment", conf.to_str().unwrap(), "--out", out.to_str().unwrap(), "--no-svg"]);
    let text = fs::read_to_string(out.join("tiny/traces/parallel-001.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("run_id,iteration,incumbent_coords,incumbent_mean,incumbent_n,n_regions,total_sim_calls,partition_event")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    let mut calls = 0u64;
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 8);
        assert_eq!(row[0], "parallel-001");
        assert_eq!(row[1], i.to_string());
        assert_eq!(row[2].split(';').count(), 2);
        assert!(["none", "generic", "adaptive", "fallback"].contains(&row[7]));
        let c: u64 = row[6].parse().unwrap();
        assert!(c >= calls);
        calls = c;
    }
    assert_eq!(rows[0][7], "none");
    let agg = fs::read_to_string(out.join("tiny/aggregate.csv")).unwrap();
    assert_eq!(agg.lines().next(), Some("iteration,arm,mean_incumbent,ci_half_width"));
    assert_eq!(agg.lines().count(), 1 + 2 * 6);
}

#[test]
fn svg_is_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    run_ok(&["--experiment", conf.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let text = fs::read_to_string(out.join("tiny/tiny.svg")).unwrap();
    let doc = roxmltree::Document::parse(&text).expect("well-formed xml");
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
    assert_eq!(lines.len(), 2);
    for l in lines {
        assert_eq!(l.attribute("points").unwrap().split(' ').count(), 6);
    }
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polygon")).count(), 2);
}

#[test]
fn flags_override_file_keys() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    run_ok(&[
        "--experiment",
        conf.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--runs",
        "2",
        "--strategy",
        "parallel",
        "--seed",
        "5",
        "--no-svg",
    ]);
    let files = list_files(&out.join("tiny/traces")).unwrap();
    assert_eq!(files, vec![PathBuf::from("parallel-000.csv"), PathBuf::from("parallel-001.csv")]);
    let summary = fs::read_to_string(out.join("tiny/summary.txt")).unwrap();
    assert!(summary.contains("runs per arm: 2"));
}

#[test]
fn seed_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), TINY);
    let mut traces = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(format!("s{seed}"));
        run_ok(&["--experiment", conf.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed, "--no-svg"]);
        traces.push(fs::read(out.join("tiny/traces/generic-000.csv")).unwrap());
    }
    assert_ne!(traces[0], traces[1]);
}

#[test]
fn errors_exit_nonzero() {
    let out = bench(&["--experiment", "no-such-experiment"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown experiment"));

    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "runs = three\n");
    let out = bench(&["--experiment", conf.to_str().unwrap()]);
    assert!(!out.status.success());

    let conf = write_config(dir.path(), TINY);
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "not a directory").unwrap();
    let out = bench(&["--experiment", conf.to_str().unwrap(), "--out", blocker.to_str().unwrap(), "--no-svg"]);
    assert!(!out.status.success());

    let out = bench(&["--strategy", "hyperplane", "--runs", "1"]);
    assert!(!out.status.success(), "hyperplane needs clusters");
}
