use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairtrade"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

/// Value of `column` in the first data row of the first CSV table in `text`.
fn field(text: &str, column: &str) -> f64 {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header
        .iter()
        .position(|h| *h == column)
        .unwrap_or_else(|| panic!("no column {column} in {header:?}"));
    row[k].parse().unwrap()
}

/// The table that follows the first blank line.
fn second_table(text: &str) -> &str {
    text.split("\n\n").nth(1).expect("two tables")
}

#[test]
fn evaluate_intro_fixed_price() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(
        dir.path(),
        "u01_zero.json",
        r#"{"buyer":{"family":"uniform","lo":0,"hi":1}}"#,
    );
    for mech in ["fpm:0.2", r#"{"mech":"fpm","p":0.2}"#] {
        let o = run(&["evaluate", "--instance", &inst, "--mech", mech]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let out = stdout(&o);
        assert!((field(&out, "gft") - 0.48).abs() < 1e-12);
        assert!((field(&out, "seller_ratio") - 0.64).abs() < 1e-12);
        assert!((field(&out, "gft_ratio") - 0.96).abs() < 1e-12);
    }
}

#[test]
fn lp_full_information_split() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(
        dir.path(),
        "pm2_zero.json",
        r#"{"buyer":{"values":[2],"probs":[1]},"seller":{"values":[0],"probs":[1]}}"#,
    );
    let o = run(&[
        "lp",
        "--instance",
        &inst,
        "--objective",
        "gft",
        "--fair",
        "ks",
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    let record = second_table(&out);
    assert!((field(record, "gft") - 2.0).abs() < 1e-9);
    assert!((field(record, "seller_utility") - 1.0).abs() < 1e-9);
    assert!((field(record, "buyer_utility") - 1.0).abs() < 1e-9);
    assert!((field(&out, "x") - 1.0).abs() < 1e-9);
}

#[test]
fn lp_frontier_and_nsw() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(
        dir.path(),
        "two.json",
        r#"{"buyer":{"values":[1,2],"probs":[0.5,0.5]}}"#,
    );
    let out_path = dir.path().join("sol.csv");
    let o = run(&[
        "lp",
        "--instance",
        &inst,
        "--objective",
        "nsw",
        "--frontier",
        "5",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let frontier = fs::read_to_string(dir.path().join("sol_frontier.csv")).unwrap();
    assert_eq!(frontier.lines().count(), 6);
    let record = fs::read_to_string(dir.path().join("sol_outcome.csv")).unwrap();
    assert!(field(&record, "seller_ratio") >= 0.5 - 1e-6);
    assert!(field(&record, "buyer_ratio") >= 0.5 - 1e-6);
}

#[test]
fn ksfair_price_and_reduce() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(
        dir.path(),
        "mhr.json",
        r#"{"buyer":{"family":"example_mhr"}}"#,
    );
    let o = run(&["ksfair-price", "--instance", &inst]);
    assert!(o.status.success());
    let p = field(&stdout(&o), "price");
    assert!((0.7995..=0.8020).contains(&p), "{p}");
    let o = run(&["reduce", "--instance", &inst, "--base", "rom"]);
    assert!(o.status.success());
    assert!(field(&stdout(&o), "ks_gap").abs() < 1e-9);
}

#[test]
fn bounds_mhr_coarse_and_default_grid() {
    let o = run(&["--threads", "4", "bounds", "mhr", "--grid", "32"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(field(second_table(&out), "bound") >= 0.90);
    assert_eq!(out.split("\n\n").next().unwrap().lines().count(), 33);
    let o = run(&["--threads", "4", "bounds", "mhr", "--grid", "100"]);
    assert!(field(second_table(&stdout(&o)), "bound") >= 0.913);
}

#[test]
fn bounds_reg_with_cells_file() {
    let dir = tempfile::tempdir().unwrap();
    let cells = write(
        dir.path(),
        "cells.json",
        r#"[{"s":0.0,"l":0.5,"alpha":0.7},{"s":0.5,"l":1.0,"alpha":0.7}]"#,
    );
    let o = run(&["bounds", "reg", "--grid", "16", "--cells", &cells]);
    assert!(o.status.success());
    let gap = write(
        dir.path(),
        "gap.json",
        r#"[{"s":0.0,"l":0.4,"alpha":0.7},{"s":0.5,"l":1.0,"alpha":0.7}]"#,
    );
    let o = run(&["bounds", "reg", "--grid", "16", "--cells", &gap]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn curves_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = run(&[
            "curves",
            "--example",
            "mhr",
            "--points",
            "50",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a_prices.csv")).unwrap(),
        fs::read(dir.path().join("b_prices.csv")).unwrap()
    );
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().next(), Some("q,revenue"));
    let last = text.lines().nth(1).unwrap();
    assert_eq!(
        last.split(',')
            .nth(1)
            .unwrap()
            .split('e')
            .next()
            .unwrap()
            .len(),
        18
    );
}

#[test]
fn exit_codes_and_no_panics() {
    let dir = tempfile::tempdir().unwrap();
    let u01 = write(
        dir.path(),
        "u01.json",
        r#"{"buyer":{"family":"uniform","lo":0,"hi":1}}"#,
    );
    let none = write(
        dir.path(),
        "none.json",
        r#"{"buyer":{"values":[0.5],"probs":[1]},"seller":{"values":[1],"probs":[1]}}"#,
    );
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"buyer":{"family":"uniform","lo":1,"hi":0}}"#,
    );
    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["evaluate", "--instance", &u01, "--mech", "fpm:nan"], 1),
        (vec!["evaluate", "--instance", &u01, "--mech", "fpm:-3"], 1),
        (
            vec!["evaluate", "--instance", &u01, "--mech", "lambda_rom:1e308"],
            1,
        ),
        (vec!["evaluate", "--instance", &bad, "--mech", "som"], 1),
        (
            vec!["evaluate", "--instance", "/missing.json", "--mech", "som"],
            1,
        ),
        (vec!["--tol", "-1", "ksfair-price", "--instance", &u01], 1),
        (vec!["--tol", "inf", "ksfair-price", "--instance", &u01], 1),
        (vec!["--threads", "0", "bounds", "reg"], 1),
        (vec!["bounds", "reg", "--grid", "2"], 1),
        (vec!["bounds", "reg", "--grid", "99999999999"], 1),
        (vec!["bounds", "mhr", "--grid", "16", "--lattice", "0,4"], 1),
        (vec!["curves", "--example", "nope"], 1),
        (vec!["curves", "--example", "irregular:2"], 1),
        (vec!["curves", "--example", "regular", "--points", "0"], 1),
        (vec!["lp", "--instance", &u01], 1),
        (vec!["lp", "--instance", &none, "--frontier", "1"], 1),
        (vec!["reproduce", "--only", "99"], 1),
        (vec!["frobnicate"], 1),
        (vec!["reduce", "--instance", &none, "--base", "rom"], 2),
        (vec!["lp", "--instance", &none, "--fair", "ks"], 2),
    ];
    for (args, code) in cases {
        let o = run(&args);
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(o.status.code(), Some(code), "{args:?}: {err}");
        assert!(!err.contains("panicked"), "{args:?}: {err}");
        assert!(!err.is_empty(), "{args:?}");
    }
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn reproduce_single_criterion() {
    let o = run(&["reproduce", "--only", "1,5"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(
        out.lines().filter(|l| l.starts_with("PASS")).count() == 2,
        "{out}"
    );
    assert!(out.contains("0 of 2 criteria failed"));
}
