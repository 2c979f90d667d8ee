use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).to_string_lossy().into_owned()
}

fn erz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_erz")).args(args).output().expect("binary runs")
}

fn report(args: &[&str]) -> Value {
    let out = erz(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn cells_axes_fixture() {
    let r = report(&["cells", "--config", &fixture("cells_axes.json")]);
    assert_eq!(r["report"]["nonempty_cell_count"], 4);
    assert_eq!(r["report"]["bound"], 9);
    assert_eq!(r["report"]["partition_ok"], true);
}

#[test]
fn violated_bound_exits_two_with_report() {
    let out = erz(&["cells", "--config", &fixture("cells_violated.json")]);
    assert_eq!(out.status.code(), Some(2));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["report"]["within_bound"], false);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(erz(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(erz(&["cells"]).status.code(), Some(1));
    assert_eq!(erz(&["cells", "--config", "/nonexistent/cells.json"]).status.code(), Some(1));
    assert_eq!(erz(&["evasive", "--config", &fixture("evasive_degenerate.json")]).status.code(), Some(1));
    assert_eq!(erz(&["bounds", "--set", "nonsense"]).status.code(), Some(1));
    assert_eq!(erz(&["--help"]).status.code(), Some(0));
}

#[test]
fn oracle_fixtures() {
    assert_eq!(report(&["cts-oracle", "--config", &fixture("oracle.json")])["is_cts"], true);
    let r = report(&["cts-oracle", "--config", &fixture("oracle_fail.json")]);
    assert_eq!(r["is_cts"], false);
    assert_eq!(r["vanishing_outside_sigma"][0], "x1");
}

#[test]
fn eval_reports_undefined_nodes() {
    let r = report(&[
        "eval",
        "--network",
        &fixture("frac.json"),
        "--inst",
        &fixture("frac_inst.json"),
        "--points",
        &fixture("points.json"),
    ]);
    // 1.1 computes (1 + 2x)/(2 + 2x), which has a pole at x = -1 = 100.
    assert_eq!(r["results"][2]["outputs"][0]["undefined_at"], "1.1");
    assert!(r["results"][0]["outputs"][0].is_string());
}

#[test]
fn equivalent_networks_are_all_zero() {
    let inst = fixture("frac_inst.json");
    let r = report(&["equiv-test", "--a", &fixture("frac.json"), "--b", &fixture("frac_b.json"), "--inst-a", &inst, "--inst-b", &inst]);
    assert_eq!(r["verdict"], "all_zero");
    assert_eq!(r["report"]["M"], 48);
}

#[test]
fn identity_test_certifies_nonzero_output() {
    let r = report(&["identity-test", "--network", &fixture("frac.json"), "--inst", &fixture("frac_inst.json"), "--M", "5"]);
    assert_eq!(r["verdict"], "certified_nonzero");
    assert_eq!(r["report"]["M"], 5);
}

#[test]
fn bounds_from_flags() {
    let r = report(&["bounds", "--which", "cor59", "--which", "cor510", "--set", "L=4", "--set", "S=2"]);
    assert_eq!(r["results"]["cor59"]["minimal_length"], 48);
    assert_eq!(r["results"]["cor510"]["minimal_length"], 96);
    let r = report(&["bounds", "--which", "thm411", "--set", "deg_lci=1", "--set", "dim=2", "--set", "d=1", "--set", "L=1150"]);
    assert_eq!(r["results"]["thm411"]["satisfied"], false);
}

#[test]
fn evasive_fixture() {
    let r = report(&["evasive", "--config", &fixture("evasive.json")]);
    assert_eq!(r["report"]["intersection_count"], 2);
    assert_eq!(r["report"]["witness_nonvanishing"], serde_json::json!(["1", "1"]));
}

#[test]
fn out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let args = ["vcdim", "--config", &fixture("vcdim.json"), "--seed", "2"];
    let stdout = erz(&args).stdout;
    let mut with_out = args.to_vec();
    let p = path.to_string_lossy().into_owned();
    with_out.extend(["--out", &p]);
    let quiet = erz(&with_out);
    assert!(quiet.status.success());
    assert!(quiet.stdout.is_empty());
    assert_eq!(std::fs::read(&path).unwrap(), stdout);
}

#[test]
fn thread_count_does_not_change_reports() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_erz"))
            .args(["cts-density", "--config", &fixture("density.json"), "--trials", "500", "--seed", "1"])
            .env("ERZ_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn compile_output_reloads() {
    let out = erz(&["compile", "--network", &fixture("frac.json")]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let back = erz_core::DivFreeResult::from_json(&text).unwrap();
    assert_eq!(back.compiled.activation(), &erz_core::Activation::Square);
    assert!(back.metrics.within_bounds);
}
