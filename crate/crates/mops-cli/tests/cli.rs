//! Binary-level contract tests: exit codes, report shape, determinism.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use mops_core::scalar::parse_rat;
use num_traits::Signed;

fn mops(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mops")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tmp(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("mops-cli-test-{}-{name}", std::process::id()));
    p
}

#[test]
fn verify_report_is_deterministic_and_schema_valid() {
    let out1 = tmp("det1.json");
    let out2 = tmp("det2.json");
    let base = [
        "verify", "--family", "charlier", "--p", "1", "--eta", "1/3", "--n", "4", "--jet", "1",
        "--tail", "1e-30", "--out",
    ];
    let mut a1: Vec<&str> = base.to_vec();
    let s1 = out1.to_str().unwrap();
    a1.push(s1);
    let mut a2: Vec<&str> = base.to_vec();
    let s2 = out2.to_str().unwrap();
    a2.push(s2);

    let r1 = mops(&a1);
    assert_eq!(r1.status.code(), Some(0), "stderr: {}", stderr(&r1));
    let r2 = mops(&a2);
    assert_eq!(r2.status.code(), Some(0));

    let b1 = fs::read(&out1).unwrap();
    let b2 = fs::read(&out2).unwrap();
    assert_eq!(b1, b2, "report bodies differ between identical runs");

    let v: serde_json::Value = serde_json::from_slice(&b1).unwrap();
    assert_eq!(v["schema"], "mops-report/1");
    assert!(v["config-echo"].is_object());
    let sections = v["sections"].as_array().unwrap();
    assert!(!sections.is_empty());
    for s in sections {
        assert!(s["identity"].is_string());
        assert!(s["max_residual"].is_string());
        assert!(s["budget"].is_string());
        let verdict = s["verdict"].as_str().unwrap();
        assert!(matches!(verdict, "pass" | "fail" | "skipped"), "verdict {verdict}");
        parse_rat(s["max_residual"].as_str().unwrap()).expect("residual is num/den");
    }

    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp("det1.json.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["body-bytes"].as_u64().unwrap() as usize, b1.len());
    assert!(meta["written-unix-seconds"].as_u64().unwrap() > 0);

    for p in [out1, out2, tmp("det1.json.meta.json"), tmp("det2.json.meta.json")] {
        let _ = fs::remove_file(p);
    }
}

#[test]
fn config_errors_exit_two() {
    let r = mops(&["verify", "--family", "charlier", "--p", "0", "--eta", "1/3"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("p must be"), "stderr: {}", stderr(&r));

    let r = mops(&["verify", "--family", "nope", "--p", "1", "--eta", "1/3"]);
    assert_eq!(r.status.code(), Some(2));

    let r = mops(&["verify", "--family", "charlier", "--eta", "1/3"]);
    assert_eq!(r.status.code(), Some(2), "missing --p");

    let r = mops(&["verify"]);
    assert_eq!(r.status.code(), Some(2), "no system at all");

    let r = mops(&["verify", "--family", "meixner2", "--p", "1", "--b", "1/2", "--eta", "3/2"]);
    assert_eq!(r.status.code(), Some(2), "divergent meixner2 eta");
}

#[test]
fn shift_check_contract() {
    let r = mops(&["shift-check", "--family", "meixner2", "--p", "1", "--b", "1/2", "--eta", "1/4"]);
    assert_eq!(r.status.code(), Some(2), "missing shift must be a config error");

    let r = mops(&[
        "shift-check", "--family", "meixner2", "--p", "1", "--b", "1/2", "--eta", "1/4", "--n",
        "6", "--jet", "0", "--tail", "1e-30", "--shift", "b:a=1,i=1", "--format", "csv",
    ]);
    assert_eq!(r.status.code(), Some(0), "stderr: {}", stderr(&r));
    let body = stdout(&r);
    assert!(body.contains("\"connRel1[b:a=1,i=1]\""), "body: {body}");
    assert!(body.contains("\"hypRelM[b:a=1,i=1]\""));
    assert!(body.contains("\"compJo[b:a=1,i=1]\""));
    assert!(!body.contains(",fail\n"));
}

#[test]
fn table_pins_closed_form_row_zero() {
    let r = mops(&[
        "table", "--family", "charlier", "--p", "2", "--eta", "1/3,1/5", "--n", "6", "--jet",
        "0", "--tail", "1e-30", "--format", "csv",
    ]);
    assert_eq!(r.status.code(), Some(0), "stderr: {}", stderr(&r));
    let body = stdout(&r);
    let mut lines = body.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,alpha0,alpha1,alpha2,h,tau,\
         alpha0-closed,alpha0-res,alpha1-closed,alpha1-res,alpha2-closed,alpha2-res"
    );
    let row0: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row0[0], "0");
    assert_eq!(row0[5], "1", "tau_0");
    assert_eq!(row0[6], "1/3", "closed-form alpha0 at row 0");

    // every residual column stays within the tail budget
    let budget = parse_rat("1e-30").unwrap() * parse_rat("1048576").unwrap();
    for line in body.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        for idx in [7, 9, 11] {
            let res = parse_rat(cells[idx]).unwrap();
            assert!(res.abs() <= budget, "row {} col {idx}: {}", cells[0], cells[idx]);
        }
    }
}

#[test]
fn table_gen_kind_residuals_below_tolerance() {
    let r = mops(&[
        "table", "--family", "gen-charlier", "--p", "2", "--c", "1/2", "--eta", "1/4,1/3",
        "--n", "8", "--jet", "0", "--tail", "1e-30", "--format", "csv",
    ]);
    assert_eq!(r.status.code(), Some(0), "stderr: {}", stderr(&r));
    let body = stdout(&r);
    assert!(body.lines().next().unwrap().contains("alpha0-pred"));
    // trajectory regeneration drifts, so give it the squared headroom
    let head = parse_rat("1048576").unwrap();
    let budget = parse_rat("1e-30").unwrap() * &head * &head;
    for line in body.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        for idx in [7, 9, 11] {
            let res = parse_rat(cells[idx]).unwrap();
            assert!(res.abs() <= budget, "row {} col {idx}", cells[0]);
        }
    }
}

#[test]
fn identity_failure_exits_one_but_writes_report() {
    let out = tmp("fail.json");
    let r = mops(&[
        "verify", "--family", "charlier", "--p", "1", "--eta", "1/3", "--n", "4", "--jet", "0",
        "--tail", "1e-30", "--amp", "1/1000000000000000000000000000000", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("fail"));
    let body = fs::read_to_string(&out).unwrap();
    assert!(body.contains("\"verdict\": \"fail\""), "report must still be written");
    let _ = fs::remove_file(&out);
    let _ = fs::remove_file(tmp("fail.json.meta.json"));
}

#[test]
fn verify_csv_has_header_and_tracks_exit() {
    let r = mops(&[
        "verify", "--family", "charlier", "--p", "1", "--eta", "1/3", "--n", "3", "--jet", "0",
        "--tail", "1e-20", "--format", "csv",
    ]);
    assert_eq!(r.status.code(), Some(0));
    let body = stdout(&r);
    assert_eq!(body.lines().next().unwrap(), "identity,max_residual,budget,verdict");
    assert!(body.lines().skip(1).all(|l| l.ends_with(",pass") || l.ends_with(",skipped")));
}

#[test]
fn weights_file_inputs() {
    let fam = tmp("fam.json");
    fs::write(&fam, r#"{"kind":"meixner2","p":1,"b":["1/2"],"eta":"1/4"}"#).unwrap();
    let r = mops(&[
        "verify", "--weights", fam.to_str().unwrap(), "--n", "3", "--jet", "0", "--tail",
        "1e-20",
    ]);
    assert_eq!(r.status.code(), Some(0), "stderr: {}", stderr(&r));

    let raw = tmp("raw.json");
    fs::write(&raw, r#"{"p":1,"c":[],"weights":[{"eta":"2/7","b":[]}]}"#).unwrap();
    let r = mops(&[
        "verify", "--weights", raw.to_str().unwrap(), "--n", "3", "--jet", "0", "--tail",
        "1e-20",
    ]);
    assert_eq!(r.status.code(), Some(0), "stderr: {}", stderr(&r));
    // raw systems have no family laws; the section must be skipped, not failed
    let body = stdout(&r);
    assert!(body.contains("raw weight system"));

    let r = mops(&[
        "verify", "--weights", raw.to_str().unwrap(), "--family", "charlier", "--p", "1",
        "--eta", "1/3",
    ]);
    assert_eq!(r.status.code(), Some(2), "both inputs given");

    let _ = fs::remove_file(fam);
    let _ = fs::remove_file(raw);
}
