use std::path::Path;
use std::process::{Command, Output};

fn pufe(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pufe"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.cfg");
    std::fs::write(&path, "n = 300\nd1 = 8\ntrue_rank = 2\nb = 10\ntrials = 2\n").unwrap();
    path
}

#[test]
fn run_writes_the_three_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = pufe(
        &["run", "--config", cfg.to_str().unwrap(), "--seed", "3", "--out", "res", "--methods", "NOGD,PUFE", "--setting", "IC"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    assert_eq!(header(&res.join("metrics.csv")), "method,setting,mean,std");
    assert_eq!(header(&res.join("curves.csv")), "method,setting,t,avg_cum_loss");
    assert_eq!(header(&res.join("alphas.csv")), "t,expert,alpha");
    let metrics = std::fs::read_to_string(res.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = metrics.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("NOGD,IC,") && rows[1].starts_with("PUFE,IC,"));
}

#[test]
fn trials_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = pufe(
        &["run", "--config", cfg.to_str().unwrap(), "--trials", "1", "--methods", "NOGD", "--setting", "C"],
        dir.path(),
    );
    assert!(out.status.success());
    let metrics = std::fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    // A single trial has zero spread.
    assert!(metrics.lines().nth(1).unwrap().ends_with(",0"));
}

#[test]
fn simulate_dumps_stream_and_script() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = pufe(&["simulate", "--config", cfg.to_str().unwrap(), "--setting", "I", "--out", "sim"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stream = std::fs::read_to_string(dir.path().join("sim/stream.csv")).unwrap();
    assert!(stream.starts_with("t,phase,observed_old_indices,observed_old_values,new_0,"));
    assert_eq!(stream.lines().count(), 301);
    let script = std::fs::read_to_string(dir.path().join("sim/script.txt")).unwrap();
    assert!(script.contains("b=10") && script.contains("d1=8"));
}

#[test]
fn complete_fills_rows_from_a_history() {
    let dir = tempfile::tempdir().unwrap();
    // Rank-2 history in 4 dimensions spanned by (1,0,1,0) and (0,1,0,1).
    let mut history = String::new();
    for i in 0..12 {
        let (a, b) = ((i % 5) as f64 - 2.0, (i % 3) as f64 + 0.5);
        history.push_str(&format!("{a},{b},{a},{b}\n"));
    }
    std::fs::write(dir.path().join("history.csv"), history).unwrap();
    std::fs::write(
        dir.path().join("observed.csv"),
        "row_id,col_id,value\n0,0,2\n0,1,-1\n1,2,3\n",
    )
    .unwrap();
    let out = pufe(
        &["complete", "--observed", "observed.csv", "--history", "history.csv", "--rank", "2", "--min-entries", "2", "--out", "c"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let completed = std::fs::read_to_string(dir.path().join("c/completed.csv")).unwrap();
    let mut lines = completed.lines();
    assert_eq!(lines.next(), Some("row_id,col_id,value"));
    let entries: Vec<(usize, usize, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(entries.len(), 4);
    let expected = [2.0, -1.0, 2.0, -1.0];
    for (row, col, v) in entries {
        assert_eq!(row, 0);
        assert!((v - expected[col]).abs() < 1e-9);
    }
    let discarded = std::fs::read_to_string(dir.path().join("c/discarded.csv")).unwrap();
    assert_eq!(discarded, "row_id\n1\n");
}

#[test]
fn bad_arguments_give_a_one_line_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--setting", "Q"],
        vec!["run", "--methods", "NOGD,XYZ"],
        vec!["run", "--config", "missing.cfg"],
        vec!["frobnicate"],
    ] {
        let out = pufe(&args, dir.path());
        assert!(!out.status.success(), "{args:?}");
        let stderr = String::from_utf8(out.stderr).unwrap();
        assert_eq!(stderr.trim_end().lines().count(), 1, "{args:?}: {stderr}");
    }
}

#[test]
fn invalid_config_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "n = 300\ndelta = 1.5\n").unwrap();
    let out = pufe(&["run", "--config", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error: ") && stderr.contains("delta"), "{stderr}");
}
