use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn balsam(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_balsam"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = balsam(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap()
}

fn json(dir: &Path, file: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, file)).unwrap()
}

#[test]
fn srs_on_grid_writes_one_row_per_unit() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["sample", "--grid", "40", "--design", "srs", "--n", "50", "--out-dir", "o"]);
    let text = read(tmp.path(), "o/sample.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "unit,id,pi");
    assert_eq!(lines.len(), 51);
    assert!(lines[1..].iter().all(|l| l.ends_with(",0.03125")));
    assert!(!tmp.path().join("o/balance.csv").exists());
}

#[test]
fn cube_sample_is_balanced_on_coordinates() {
    let tmp = TempDir::new().unwrap();
    let args = [
        "sample", "--grid", "40", "--design", "cube", "--n", "50", "--aux", "one,x,y", "--seed", "11", "--out-dir",
        "o",
    ];
    ok(tmp.path(), &args);
    let text = read(tmp.path(), "o/balance.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("variable,total,estimate,relative_deviation"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["one", "x", "y"]);
    for r in &rows {
        let dev: f64 = r[3].parse().unwrap();
        assert!(dev <= 0.05, "{r:?}");
    }
    assert_eq!(rows[0][3].parse::<f64>().unwrap(), 0.0);
    assert_eq!(read(tmp.path(), "o/sample.csv").lines().count(), 51);
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = TempDir::new().unwrap();
    for out in ["a", "b"] {
        ok(
            tmp.path(),
            &["sample", "--grid", "12", "--design", "local_pivotal", "--n", "9", "--seed", "5", "--out-dir", out],
        );
    }
    assert_eq!(read(tmp.path(), "a/sample.csv"), read(tmp.path(), "b/sample.csv"));
    ok(
        tmp.path(),
        &["sample", "--grid", "12", "--design", "local_pivotal", "--n", "9", "--seed", "6", "--out-dir", "c"],
    );
    assert_ne!(read(tmp.path(), "a/sample.csv"), read(tmp.path(), "c/sample.csv"));
}

#[test]
fn config_file_and_flag_override() {
    let tmp = TempDir::new().unwrap();
    let cfg = r#"{"grid": 10, "design": {"design": "grts", "n": 7}, "seed": 3, "out_dir": "cfg"}"#;
    fs::write(tmp.path().join("run.json"), cfg).unwrap();
    ok(tmp.path(), &["sample", "--config", "run.json"]);
    assert_eq!(read(tmp.path(), "cfg/sample.csv").lines().count(), 8);
    ok(tmp.path(), &["sample", "--config", "run.json", "--n", "4", "--out-dir", "flags"]);
    assert_eq!(read(tmp.path(), "flags/sample.csv").lines().count(), 5);
}

#[test]
fn census_estimate_is_exact() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("f.csv"), "id,y\na,3\nb,4.5\nc,-1\nd,10\n").unwrap();
    let base = ["--frame", "f.csv", "--design", "srs", "--n", "4", "--out-dir", "o"];
    ok(tmp.path(), &[&["sample"], &base[..]].concat());
    let stdout = ok(tmp.path(), &[&["estimate", "--sample", "o/sample.csv", "--y", "y"], &base[..]].concat());
    assert!(stdout.contains("total\t16.5"));
    let report = json(tmp.path(), "o/estimate.json");
    assert_eq!(report["total"], 16.5);
    assert_eq!(report["variance"], 0.0);
    assert_eq!(report["variance_form"], "sen_yates_grundy");
}

#[test]
fn cps_estimate_has_finite_syg_variance() {
    let tmp = TempDir::new().unwrap();
    let base = ["--grid", "5", "--design", "cps", "--pi", "prop:x", "--n", "6", "--out-dir", "o"];
    let mut csv = String::from("id\n");
    let stdout = ok(tmp.path(), &[&["sample"], &base[..]].concat());
    assert!(stdout.starts_with("cps: 6 of 25"));
    for line in read(tmp.path(), "o/sample.csv").lines().skip(1) {
        csv.push_str(line.split(',').nth(1).unwrap());
        csv.push('\n');
    }
    fs::write(tmp.path().join("ids.csv"), csv).unwrap();
    ok(tmp.path(), &[&["estimate", "--sample", "ids.csv", "--y", "y"], &base[..]].concat());
    let report = json(tmp.path(), "o/estimate.json");
    assert_eq!(report["variance_form"], "sen_yates_grundy");
    let v = report["variance"].as_f64().unwrap();
    assert!(v.is_finite());
}

#[test]
fn zero_inclusion_unit_exits_three() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("f.csv"), "id,w,y\na,0,3\nb,1,4\nc,0.5,5\n").unwrap();
    fs::write(tmp.path().join("s.csv"), "id\na\nb\n").unwrap();
    let out = balsam(
        tmp.path(),
        &[
            "estimate", "--frame", "f.csv", "--design", "poisson", "--pi", "column:w", "--sample", "s.csv", "--y", "y",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("zero inclusion probability"));
}

#[test]
fn missing_joint_probabilities_are_named() {
    let tmp = TempDir::new().unwrap();
    let base = ["--grid", "6", "--design", "local_pivotal", "--n", "4", "--out-dir", "o"];
    ok(tmp.path(), &[&["sample"], &base[..]].concat());
    let est = [&["estimate", "--sample", "o/sample.csv", "--y", "x"], &base[..]].concat();
    let stdout = ok(tmp.path(), &est);
    assert!(stdout.contains("variance\tNA"));
    assert!(json(tmp.path(), "o/estimate.json")["note"]
        .as_str()
        .unwrap()
        .contains("joint inclusion probabilities"));
    let out = balsam(tmp.path(), &[&est[..], &["--variance", "ht"]].concat());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("local_pivotal has no closed-form joint"));
}

#[test]
fn diagnose_reports_entropy_and_spatial_balance() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &["diagnose", "--grid", "4", "--design", "srs", "--n", "2", "--replications", "500", "--out-dir", "d"],
    );
    let report = json(tmp.path(), "d/diagnostics.json");
    let h = report["entropy"].as_f64().unwrap();
    assert!((h - 120f64.ln()).abs() < 1e-9);
    assert!(report["spatial_balance_index"].as_f64().unwrap() >= 0.0);
    assert_eq!(report["inclusion_check"]["replications"], 500);
}

#[test]
fn config_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let cases: [&[&str]; 5] = [
        &["sample", "--grid", "4", "--design", "nope", "--n", "2"],
        &["sample", "--grid", "4", "--design", "srs", "--n", "20"],
        &["sample", "--design", "srs", "--n", "2"],
        &["sample", "--grid", "4", "--n", "2"],
        &["experiment", "--replications", "0"],
    ];
    for args in cases {
        let out = balsam(tmp.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    fs::write(tmp.path().join("bad.json"), r#"{"grid": 4, "colour": 1}"#).unwrap();
    let out = balsam(tmp.path(), &["sample", "--config", "bad.json", "--design", "srs"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_outputs() {
    let tmp = TempDir::new().unwrap();
    let args = [
        "experiment", "--side", "8", "--n", "6", "--replications", "20", "--stratum-block", "4", "--out-dir", "e",
    ];
    ok(tmp.path(), &args);
    let table = read(tmp.path(), "e/spatial_balance.csv");
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "design,mean_index,sd_index,replications");
    assert_eq!(lines.len(), 8);
    for design in ["systematic", "srs", "stratified", "local_pivotal", "cube", "local_cube", "grts"] {
        for kind in ["scatter", "voronoi"] {
            let svg = read(tmp.path(), &format!("e/{kind}_{design}.svg"));
            assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        }
    }
}

#[test]
fn experiment_single_design_and_replication() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("exp.json"), r#"{"side": 6, "n": 4, "replications": 1}"#).unwrap();
    ok(tmp.path(), &["experiment", "--config", "exp.json", "--design", "srs", "--out-dir", "e"]);
    let table = read(tmp.path(), "e/spatial_balance.csv");
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("srs,") && lines[1].ends_with(",,1"));
}

#[test]
fn experiment_is_independent_of_thread_count() {
    let tmp = TempDir::new().unwrap();
    let args = [
        "experiment", "--side", "10", "--n", "8", "--replications", "40", "--stratum-block", "5", "--seed", "9",
    ];
    let mut outputs = Vec::new();
    for (dir, threads, extra) in [("t1", "1", None), ("t4", "4", None), ("seq", "2", Some("--sequential"))] {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_balsam"));
        cmd.current_dir(tmp.path()).env("RAYON_NUM_THREADS", threads).args(args).args(["--out-dir", dir]);
        if let Some(e) = extra {
            cmd.arg(e);
        }
        assert!(cmd.output().unwrap().status.success());
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(tmp.path().join(dir))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert_eq!(outputs[0].len(), 15);
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}
