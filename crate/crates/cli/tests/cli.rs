//! End-to-end tests of the compiled binary: exit codes, output files, and
//! byte determinism across repeated invocations.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_idsense")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("idsense-cli-{tag}-{}", std::process::id()));
    fs::create_dir_all(&dir).expect("create work dir");
    dir
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn write_adder_spec(dir: &PathBuf) -> PathBuf {
    let spec = dir.join("adder.json");
    let out = run(&[
        "example",
        "binary-adder",
        "--grid",
        "0:0:1",
        "--out",
        dir.join("ignore.csv").to_str().unwrap(),
        "--spec-out",
        spec.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    spec
}

#[test]
fn example_writes_sweep_spec_and_summary() {
    let dir = workdir("example");
    let fig = dir.join("sweep.csv");
    let spec = dir.join("adder.json");
    let out = run(&[
        "example",
        "binary-adder",
        "--p",
        "0.2",
        "--out",
        fig.to_str().unwrap(),
        "--spec-out",
        spec.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("x=(1,1) distortions=(0.200000000,0.200000000) rate=0.904381458"));
    let csv = fs::read_to_string(&fig).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "D,rate_joint_rand,rate_joint_det,rate_separation,rate_unconstrained,feasible"
    );
    assert_eq!(csv.lines().count(), 34);
    let check = run(&["validate", "--spec", spec.to_str().unwrap()]);
    assert!(check.status.success());
    assert_eq!(
        stdout(&check).trim(),
        "OK senders=2 inputs=2,2 states=2,2 output=2"
    );
}

#[test]
fn example_streams_csv_to_stdout() {
    let out = run(&["example", "binary-adder", "--grid", "0:0.2:0.1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("D,rate_joint_rand"));
    assert_eq!(text.lines().count(), 4);
    assert!(!text.contains("x=("));
}

#[test]
fn region_single_point_prints_the_randomized_rate() {
    let dir = workdir("region-point");
    let spec = write_adder_spec(&dir);
    let out = run(&[
        "region",
        "--spec",
        spec.to_str().unwrap(),
        "--kind",
        "rand",
        "--D",
        "0.2,0.2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("rand,0.200000000,0.200000000,true,0.904381458"),
        "{text}"
    );
}

#[test]
fn region_grid_sweep_is_byte_deterministic() {
    let dir = workdir("region-sweep");
    let spec = write_adder_spec(&dir);
    let a = dir.join("a.csv");
    let b = dir.join("b.csv");
    for path in [&a, &b] {
        let out = run(&[
            "region",
            "--spec",
            spec.to_str().unwrap(),
            "--grid",
            "0:0.2:0.05",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let bytes_a = fs::read(&a).unwrap();
    assert_eq!(bytes_a, fs::read(&b).unwrap());
    let text = String::from_utf8(bytes_a).unwrap();
    // 5 budgets x 3 kinds plus metadata and header.
    assert_eq!(text.lines().count(), 17);
    assert!(text.contains("rand,0.00000000,0.00000000,false,,"));
    assert!(text.contains("sep,0.00000000,0.00000000,true,0.00000000,"));
}

#[test]
fn region_flag_conflicts_are_usage_errors() {
    let dir = workdir("region-usage");
    let spec = write_adder_spec(&dir);
    let both = run(&[
        "region",
        "--spec",
        spec.to_str().unwrap(),
        "--D",
        "0.2,0.2",
        "--grid",
        "0:0.2:0.1",
    ]);
    assert_eq!(both.status.code(), Some(2));
    assert!(stderr(&both).contains("exactly one of --D and --grid"));
    let neither = run(&["region", "--spec", spec.to_str().unwrap()]);
    assert_eq!(neither.status.code(), Some(2));
    let bad_list = run(&[
        "region",
        "--spec",
        spec.to_str().unwrap(),
        "--D",
        "0.2,abc",
    ]);
    assert_eq!(bad_list.status.code(), Some(2));
    assert!(stderr(&bad_list).contains("--D expects"));
}

#[test]
fn region_budget_length_mismatch_is_a_domain_error() {
    let dir = workdir("region-domain");
    let spec = write_adder_spec(&dir);
    let out = run(&["region", "--spec", spec.to_str().unwrap(), "--D", "0.2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("DimensionMismatch"), "{}", stderr(&out));
}

#[test]
fn validate_rejects_a_nonstochastic_kernel() {
    let dir = workdir("validate-bad");
    let spec = write_adder_spec(&dir);
    let mut value: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&spec).unwrap()).unwrap();
    value["kernel"][0][0][0][0][0] = serde_json::json!(0.5);
    let broken = dir.join("broken.json");
    fs::write(&broken, serde_json::to_string(&value).unwrap()).unwrap();
    let out = run(&["validate", "--spec", broken.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("NonStochasticRow"), "{}", stderr(&out));
    let missing = run(&["validate", "--spec", dir.join("nope.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).starts_with("IoError"));
}

#[test]
fn simulate_outputs_are_reproducible() {
    let dir = workdir("simulate");
    let spec = write_adder_spec(&dir);
    let json_a = dir.join("a.json");
    let json_b = dir.join("b.json");
    let csv_a = dir.join("a.csv");
    let csv_b = dir.join("b.csv");
    for (json, csv) in [(&json_a, &csv_a), (&json_b, &csv_b)] {
        let out = run(&[
            "simulate",
            "--spec",
            spec.to_str().unwrap(),
            "--n",
            "16",
            "--eps",
            "0.25",
            "--M",
            "1,1",
            "--N",
            "4,4",
            "--D",
            "0.2,0.2",
            "--trials",
            "50",
            "--seed",
            "7",
            "--out",
            json.to_str().unwrap(),
            "--out-csv",
            csv.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(fs::read(&json_a).unwrap(), fs::read(&json_b).unwrap());
    assert_eq!(fs::read(&csv_a).unwrap(), fs::read(&csv_b).unwrap());
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json_a).unwrap()).unwrap();
    assert_eq!(stats["trials"], 50);
    assert_eq!(stats["senders"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(&csv_a).unwrap();
    assert!(csv.starts_with("k,type1,type1_lo"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn simulate_packing_failure_is_a_domain_error() {
    let dir = workdir("simulate-pack");
    let spec = write_adder_spec(&dir);
    let out = run(&[
        "simulate",
        "--spec",
        spec.to_str().unwrap(),
        "--n",
        "4",
        "--eps",
        "0.25",
        "--M",
        "4,4",
        "--N",
        "16,16",
        "--D",
        "0.2,0.2",
        "--trials",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).starts_with("CodePackingFailure"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn unknown_flags_are_usage_errors() {
    let out = run(&["region", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}
