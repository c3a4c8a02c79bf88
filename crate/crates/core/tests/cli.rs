//! End-to-end runs of the `wqmor` binary.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

use common::fixture;

fn wqmor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wqmor")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Writes a three-node run file into a fresh directory.
fn three_node_run(extra: Value) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let mut run = json!({
        "network": fixture("three_node.json"),
        "io": { "boosters": [{ "node": "J2" }], "sensors": ["TK3"] },
        "segments_per_pipe": 150,
        "output_dir": "out"
    });
    if let (Some(r), Some(e)) = (run.as_object_mut(), extra.as_object()) {
        r.extend(e.clone());
    }
    let path = dir.path().join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&run).unwrap()).unwrap();
    (dir, path)
}

fn run_cmd(cmd: &str, run: &Path, out: &Path) -> Output {
    wqmor(&[cmd, "--run", run.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

#[test]
fn build_reports_dimensions() {
    let out = tempfile::tempdir().unwrap();
    let o = run_cmd("build", &fixture("three_node.run.json"), out.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("n_x=154"), "{}", stdout(&o));
    for f in ["system.txt", "layout.csv", "build.json", "manifest.json"] {
        assert!(out.path().join(f).exists(), "missing {f}");
    }
}

#[test]
fn malformed_run_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, "{ \"network\": ").unwrap();
    let o = run_cmd("build", &p, dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).starts_with("error:"), "{}", stderr(&o));

    let (_d, p) = three_node_run(json!({ "unknown_key": 1 }));
    assert_eq!(code(&run_cmd("build", &p, dir.path())), 2);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&wqmor(&["reduce"])), 2);
    assert_eq!(code(&wqmor(&["frobnicate", "--run", "x.json"])), 2);
}

#[test]
fn missing_network_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run.json");
    fs::write(
        &p,
        json!({"network": "nowhere.json", "io": {"boosters": [{"node": "J2"}], "sensors": ["TK3"]}}).to_string(),
    )
    .unwrap();
    assert_eq!(code(&run_cmd("build", &p, dir.path())), 2);
}

#[test]
fn mpc_without_section_exits_2() {
    let (dir, p) = three_node_run(json!({}));
    let o = run_cmd("mpc", &p, &dir.path().join("out"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("mpc"), "{}", stderr(&o));
}

#[test]
fn contradictory_bounds_exit_4() {
    let (dir, p) = three_node_run(json!({
        "mpc": {
            "controller": { "horizon": 5, "reference": [1.0], "u_min": [5.0], "u_max": [1.0] },
            "steps": 3,
            "predictor": "full"
        }
    }));
    let o = run_cmd("mpc", &p, &dir.path().join("out"));
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn short_snapshot_warns_with_both_bounds() {
    let (dir, p) = three_node_run(json!({
        "methods": [{ "method": "bpod", "m": 100, "order": { "fixed": 6 } }]
    }));
    let o = run_cmd("reduce", &p, &dir.path().join("out"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("warning:"), "{err}");
    assert!(err.contains("m_bar = 160"), "{err}");
    assert!(err.contains("travel-time bound 160"), "{err}");
    assert!(err.contains("settling-time bound"), "{err}");
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    let below = manifest["warnings"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|w| w.as_str().unwrap().contains("below m_bar"))
        .count();
    assert_eq!(below, 1);
}

#[test]
fn auto_snapshot_does_not_warn() {
    let (dir, p) = three_node_run(json!({
        "methods": [{ "method": "bpod", "order": { "fixed": 6 } }]
    }));
    let o = run_cmd("reduce", &p, &dir.path().join("out"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!stderr(&o).contains("below m_bar"), "{}", stderr(&o));
}

fn comparison_rows(dir: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join("comparison.csv"))
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn compare_table_covers_zero_and_nonzero_initial_states() {
    let (dir, p) = three_node_run(json!({
        "methods": [
            { "method": "bt", "order": { "fixed": 30 } },
            { "method": "pod", "order": { "fixed": 30 } },
            { "method": "sbpod", "order": { "fixed": 28 } }
        ],
        "experiments": [
            { "name": "zero", "amplitudes": [50.0], "horizon_s": 40000.0 },
            { "name": "ic", "amplitudes": [50.0], "horizon_s": 40000.0,
              "x0": { "values": { "R1": 1.0, "J2": 0.5, "TK3": 0.3, "PM12": 0.75, "P23": 0.3 } } }
        ]
    }));
    let out = dir.path().join("out");
    let o = run_cmd("compare", &p, &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = comparison_rows(&out);
    assert_eq!(rows[0].join(","), wqmor::sim::REPORT_HEADER);
    // one FULL row and three method rows per experiment
    assert_eq!(rows.len(), 1 + 2 * 4);
    let methods: Vec<(&str, &str)> = rows[1..].iter().map(|r| (r[1].as_str(), r[5].as_str())).collect();
    assert_eq!(
        methods,
        [
            ("FULL", "zero"),
            ("BT", "zero"),
            ("POD", "zero"),
            ("SBPOD", "zero"),
            ("FULL", "nonzero"),
            ("BT", "nonzero"),
            ("POD", "nonzero"),
            ("SBPOD", "nonzero")
        ]
    );
    for r in &rows[1..] {
        assert_eq!(r[2], "154");
        let rho: f64 = r[8].parse().unwrap();
        let rmse: f64 = r[6].parse().unwrap();
        assert!(rmse.is_finite() && rho.is_finite());
        if r[1] == "BT" || r[1] == "SBPOD" {
            assert!(rho < 1.0, "{r:?}");
        }
        // default runs carry no timings
        assert!(r[9..].iter().all(|v| v == "NA"), "{r:?}");
    }
    assert!(out.join("series_zero_1_bt.csv").exists());
    assert!(out.join("series_ic_3_sbpod.csv").exists());
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (dir, p) = three_node_run(json!({
        "methods": [
            { "method": "bt", "order": { "fixed": 10 } },
            { "method": "sbpod", "order": { "energy": 0.999 } }
        ],
        "experiments": [{ "name": "step", "amplitudes": [20.0], "steps": 500 }]
    }));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for cmd in ["build", "reduce", "compare"] {
        assert_eq!(code(&run_cmd(cmd, &p, &a)), 0);
        assert_eq!(code(&run_cmd(cmd, &p, &b)), 0);
    }
    let (ra, rb) = (read_dir_sorted(&a), read_dir_sorted(&b));
    assert_eq!(ra.len(), rb.len());
    for ((na, ca), (nb, cb)) in ra.iter().zip(&rb) {
        assert_eq!(na, nb);
        if na == "manifest.json" {
            // the manifest records the output path
            let strip = |c: &[u8]| String::from_utf8_lossy(c).replace(a.to_str().unwrap(), "").replace(b.to_str().unwrap(), "");
            assert_eq!(strip(ca), strip(cb), "{na} differs");
        } else {
            assert!(ca == cb, "{na} differs between runs");
        }
    }
}

#[test]
fn timings_flag_fills_timing_columns() {
    let (dir, p) = three_node_run(json!({
        "methods": [{ "method": "bt", "order": { "fixed": 10 } }],
        "experiments": [{ "amplitudes": [20.0], "steps": 200 }]
    }));
    let out = dir.path().join("out");
    let o = wqmor(&["compare", "--run", p.to_str().unwrap(), "--out", out.to_str().unwrap(), "--timings"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = comparison_rows(&out);
    assert!(rows[2][10].parse::<f64>().is_ok(), "{:?}", rows[2]);
}

#[test]
fn simulate_and_mpc_write_outputs() {
    let (dir, p) = three_node_run(json!({
        "experiments": [{ "name": "s", "amplitudes": [20.0], "steps": 50 }],
        "mpc": {
            "controller": { "horizon": 10, "reference": [0.5], "u_max": [1000.0] },
            "steps": 20,
            "reduction": { "method": "sbpod", "order": { "fixed": 20 } }
        }
    }));
    let out = dir.path().join("out");
    assert_eq!(code(&run_cmd("simulate", &p, &out)), 0);
    let sim = fs::read_to_string(out.join("simulate_s.csv")).unwrap();
    assert_eq!(sim.lines().count(), 51);
    let o = run_cmd("mpc", &p, &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("mpc_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["full"]["inputs_within_bounds"], json!(true));
    assert_eq!(summary["reduced"]["inputs_within_bounds"], json!(true));
    assert!(summary["full"].get("qp_time_s").is_none());
    assert!(summary["comparison"]["cost_ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn dense_threshold_override_refuses_bt() {
    let (dir, p) = three_node_run(json!({
        "methods": [{ "method": "bt", "order": { "fixed": 5 } }]
    }));
    let out = dir.path().join("out");
    let o = wqmor(&["reduce", "--run", p.to_str().unwrap(), "--out", out.to_str().unwrap(), "--dense-threshold", "100"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("intractable"), "{}", stderr(&o));
}
