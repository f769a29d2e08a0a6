//! End-to-end behavior of the `gpebo-lab` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gpebo-lab"));
    c.env_remove("GPEBO_LAB_OUT");
    c
}

fn example_json() -> Value {
    serde_json::from_str(gpebo_core::scenario::PAPER_EXAMPLE_JSON).unwrap()
}

fn short_example(t_final: f64) -> Value {
    let mut v = example_json();
    v["sim"]["t_final"] = json!(t_final);
    v
}

fn write_scenario(dir: &Path, file: &str, v: &Value) -> PathBuf {
    let p = dir.join(file);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

#[test]
fn run_writes_artifacts_into_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.json", &short_example(1.0));
    let out = dir.path().join("results");
    let o = bin().arg("run").arg(&sc).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let csv = std::fs::read_to_string(out.join("paper_example.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 27);
    assert_eq!(header, gpebo_lab::csvlog::header(2));
    assert_eq!(lines.count(), 101, "csv_every = 10 over 1000 steps");
    let svgs = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
        .count();
    assert_eq!(svgs, 9);
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("paper_example_report.json")).unwrap()).unwrap();
    assert_eq!(report["flags"]["monitors_stable"], json!(true));
    assert!(report["metrics"]["signals"].as_array().unwrap().len() == 8);
    assert!(report["assumptions"]["phi_sup_norm"].as_f64().unwrap() > 1.0);
    assert!(text(&o).contains("[PASS] regression identity"));
}

#[test]
fn out_dir_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = short_example(0.05);
    v["outputs"]["plots"] = json!(false);
    let sc = write_scenario(dir.path(), "s.json", &v);

    let o = bin()
        .arg("run")
        .arg(&sc)
        .env("GPEBO_LAB_OUT", dir.path().join("env"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(dir.path().join("env/paper_example.csv").exists());

    let o = bin()
        .arg("run")
        .arg(&sc)
        .arg("--out")
        .arg(dir.path().join("flag"))
        .env("GPEBO_LAB_OUT", dir.path().join("env2"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("flag/paper_example.csv").exists());
    assert!(!dir.path().join("env2").exists());

    let o = bin().current_dir(dir.path()).arg("run").arg(&sc).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("out/paper_example.csv").exists());
}

#[test]
fn overrides_apply_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.json", &short_example(1.0));
    let out = dir.path().join("o");
    let o = bin()
        .args(["run", "--dt", "0.01", "--t-final", "0.5", "--out"])
        .arg(&out)
        .arg(&sc)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let csv = std::fs::read_to_string(out.join("paper_example.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);

    let o = bin()
        .args(["run", "--t-final", "0"])
        .arg(&sc)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("sim.t_final"), "{}", text(&o));
}

#[test]
fn validation_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = short_example(1.0);
    v["estimator"]["kind"] = json!("lsf");
    let sc = write_scenario(dir.path(), "bad.json", &v);
    let o = bin().arg("run").arg(&sc).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let msg = text(&o);
    assert!(msg.contains("lsff") && msg.contains("gradient"), "{msg}");

    let mut v = short_example(1.0);
    v["plant"]["typo"] = json!(1);
    let sc = write_scenario(dir.path(), "typo.json", &v);
    let o = bin().arg("run").arg(&sc).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("typo"));

    let o = bin().arg("run").arg(dir.path().join("missing.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("missing.json"));
}

#[test]
fn divergence_exits_3_with_time_and_signal() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = short_example(20.0);
    v["plant"]["a"] = json!([["5", "0"], ["0", "-1"]]);
    v["plant"]["k"] = json!([0, 0]);
    v["observer"]["l"] = json!(["6", "0"]);
    v["sim"]["dt"] = json!(0.01);
    let sc = write_scenario(dir.path(), "div.json", &v);
    let o = bin().arg("run").arg(&sc).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", text(&o));
    let msg = text(&o);
    assert!(msg.contains("t = ") && msg.contains("x1"), "{msg}");
}

#[test]
fn unstable_monitors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = short_example(2.0);
    v["monitors"]["phi_bound"] = json!(1.5);
    v["outputs"]["plots"] = json!(false);
    let sc = write_scenario(dir.path(), "tight.json", &v);
    let o = bin().arg("run").arg(&sc).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("UNSTABLE"));
}

#[test]
fn check_pe_reports_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.json", &short_example(4.0));
    let o = bin()
        .args(["check-pe", "--delta", "1", "--stride", "0.5"])
        .arg(&sc)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("over 7 window(s)"), "{out}");

    let o = bin().args(["check-pe", "--delta", "5"]).arg(&sc).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("no windows"));

    let o = bin().args(["check-pe", "--delta", "-1"]).arg(&sc).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plot_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = bin().arg("plot").arg(&empty).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(std::fs::read_dir(dir.path()).unwrap().count() == 1, "no files written");

    let one = dir.path().join("one.csv");
    std::fs::write(&one, "t,thetahat1,thetaerr1,xerr1\n0,1,-1,0.5\n").unwrap();
    let out = dir.path().join("svg");
    let o = bin().arg("plot").arg(&one).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 3);

    let partial = dir.path().join("partial.csv");
    std::fs::write(&partial, "t,thetahat1,xerr1\n0,1,2\n").unwrap();
    let o = bin().arg("plot").arg(&partial).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("thetaerr1"));
}

#[test]
fn parallel_jobs_use_private_directories() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = short_example(0.5);
    a["name"] = json!("first");
    a["outputs"] = json!({});
    let mut b = a.clone();
    b["name"] = json!("second");
    b["estimator"] = json!({"kind": "gradient", "gamma": 100.0});
    let pa = write_scenario(dir.path(), "a.json", &a);
    let pb = write_scenario(dir.path(), "b.json", &b);
    let out = dir.path().join("sweep");
    let o = bin()
        .arg("run")
        .arg(&pa)
        .arg(&pb)
        .args(["--jobs", "2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(out.join("first/first.csv").exists());
    assert!(out.join("second/second.csv").exists());
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.find("scenario first").unwrap() < s.find("scenario second").unwrap());

    let o = bin()
        .arg("run")
        .arg(&pa)
        .arg(&pa)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("appears twice"));
}
