use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_instrument-compat"));
    c.env_remove("INSTRUMENT_COMPAT_TOL");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn threshold_values() {
    for (args, want) in [
        (["--lambda", "1", "--t", "0.7", "--case", "aligned"], "0.700000000\n"),
        (["--lambda", "0", "--t", "0.6", "--case", "complementary"], "0.800000000\n"),
        (["--lambda", "0.5", "--t", "0.5", "--case", "aligned"], "0.862372436\n"),
    ] {
        let o = run(&[&["threshold"], &args[..]].concat());
        assert_eq!(code(&o), 0);
        assert_eq!(stdout(&o), want);
    }
    let o = run(&["threshold", "--lambda", "0.5", "--t", "0.5"]);
    assert_eq!(stdout(&o), "lambda,t,s_max_aligned,s_max_complementary\n0.500000000,0.500000000,0.862372436,0.700629269\n");
}

#[test]
fn threshold_json() {
    let o = run(&["threshold", "--lambda", "0", "--t", "0.6", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["s_max_aligned"], 1.0);
    assert!((v["s_max_complementary"].as_f64().unwrap() - 0.8).abs() < 1e-15);
}

#[test]
fn bad_arguments_exit_2() {
    for args in [
        vec!["threshold", "--lambda", "1.5", "--t", "0.5"],
        vec!["threshold", "--lambda", "0.5"],
        vec!["region", "--lambda-grid", "0,1,1"],
        vec!["region", "--t-grid", "0.5,0.2,3"],
        vec!["certify", "--route", "sideways"],
        vec!["frobnicate"],
    ] {
        assert_eq!(code(&run(&args)), 2, "{args:?}");
    }
}

#[test]
fn region_grid_and_rows() {
    let o = run(&["region"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 122);
    assert_eq!(lines[0], "lambda,t,s_max_aligned,s_max_complementary");
    assert_eq!(lines[1], "0.000000000,0.000000000,1.000000000,1.000000000");
    assert!(lines.contains(&"1.000000000,0.300000000,0.300000000,0.000000000"));
    // λ-major: the first eleven rows share λ = 0.
    assert!(lines[1..12].iter().all(|l| l.starts_with("0.000000000,")));
    assert!(lines[12].starts_with("0.100000000,0.000000000,"));
}

#[test]
fn region_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let o = run(&["region", "--lambda-grid", "0,1,7", "--t-grid", "0.2,0.9,5", "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    let (a, b) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 36);
}

#[test]
fn unwritable_output_exits_3() {
    let o = run(&["region", "--out", "/nonexistent-dir/region.csv"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("cannot write"));
}

#[test]
fn curves_schema_and_shapes() {
    let o = run(&["curves"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 11 * 101);
    for r in &rows {
        if r[0] == 1.0 {
            assert!((r[2] - r[1]).abs() < 5e-10);
        }
        if r[0] == 0.0 {
            assert!((r[3] - (1.0 - r[1] * r[1]).sqrt()).abs() < 5e-10);
        }
    }
    let o = run(&["curves", "--lambdas", "0.3", "--t-grid", "0,1,3", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 3);
}

#[test]
fn certify_default_grid_passes() {
    let o = run(&["certify"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 121 * 2 * 2);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
    assert!(stderr(&o).contains("certified 484/484"));
}

#[test]
fn certify_below_float_precision_fails_with_listing() {
    let o = run(&["certify", "--tol", "1e-15"]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("FAIL "));
    assert!(err.contains("certificate checks failed"));
}

#[test]
fn tolerance_falls_back_to_environment() {
    let o = bin().args(["certify"]).env("INSTRUMENT_COMPAT_TOL", "1e-15").output().unwrap();
    assert_eq!(code(&o), 1);
    let o = bin().args(["certify", "--tol", "1e-9"]).env("INSTRUMENT_COMPAT_TOL", "1e-15").output().unwrap();
    assert_eq!(code(&o), 0);
    let o = bin().args(["certify"]).env("INSTRUMENT_COMPAT_TOL", "tight").output().unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(code(&run(&["certify", "--tol", "-1"])), 2);
}

#[test]
fn certify_routes_agree() {
    let o = run(&["certify", "--lambda", "0.3", "--t", "0.8", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(v["summary"]["max_route_difference"].as_f64().unwrap() <= 1e-8);
    let o = run(&["certify", "--lambda", "0.3", "--t", "0.8", "--route", "canonical", "--case", "aligned"]);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains(",aligned,canonical,"));
}

#[test]
fn certify_with_random_search() {
    let o = run(&["certify", "--lambda", "0.5", "--t", "0.5", "--route", "closed-form", "--search-iters", "2000", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let again = run(&["certify", "--lambda", "0.5", "--t", "0.5", "--route", "closed-form", "--search-iters", "2000", "--seed", "7"]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn decompose_examples() {
    let o = run(&["decompose", "--lambda", "0", "--t", "0.5", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for d in v["report"]["choi_distance"].as_array().unwrap() {
        assert!(d.as_f64().unwrap() <= 1e-9);
    }
    assert!((v["report"]["damping"][0]["gamma"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(v["post_ops"].as_array().unwrap().len(), 4);
    assert_eq!(v["params"]["formula"], "one-minus-lambda");

    assert_eq!(code(&run(&["decompose", "--lambda", "0.5", "--t", "1"])), 0);
    assert_eq!(code(&run(&["decompose", "--lambda", "1", "--t", "0.5"])), 0);
}

#[test]
fn decompose_parameter_region_exits_4() {
    let o = run(&["decompose", "--lambda", "1", "--t", "0.5", "--theta-formula", "one-plus-lambda"]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("arcsin argument"));
    let o = run(&["decompose", "--lambda", "1", "--t", "0"]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("denominator"));
}

#[test]
fn decompose_unverified_exits_1() {
    let o = run(&["decompose", "--lambda", "0.5", "--t", "1", "--theta-formula", "one-plus-lambda"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).trim_end().ends_with(",false"));
}

#[test]
fn selftest_clean_and_faulted() {
    let o = run(&["selftest"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).lines().skip(1).all(|l| l.contains(",PASS,")));

    let o = run(&["selftest", "--inject-fault", "flip-pi-z"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("zero duality gap"));
    assert!(stdout(&o).contains("zero duality gap,FAIL"));
    assert!(!stdout(&run(&["--help"])).contains("inject-fault"));
}

#[test]
fn out_flag_writes_file_and_not_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.json");
    let o = run(&["threshold", "--lambda", "0.2", "--t", "0.4", "--format", "json", "--out", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    assert!(Path::new(&p).exists());
}
