use std::path::PathBuf;
use std::process::{Command, Output};

use riskshare::lawinv::{lambda_two_entropic, solve_avar_entropic};
use serde_json::Value;

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskshare")).args(args).output().expect("binary runs")
}

fn doc(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}); stderr: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn vals(v: &Value, labels: &[&str]) -> Vec<f64> {
    labels.iter().map(|l| v[*l].as_f64().unwrap()).collect()
}

fn assert_well_formed(d: &Value) {
    for key in ["command", "problem", "seed", "tolerance", "inputs", "outputs", "checks", "passed"] {
        assert!(d.get(key).is_some(), "missing {key}");
    }
    for c in d["checks"].as_array().unwrap() {
        for key in ["name", "passed", "value", "tolerance", "detail"] {
            assert!(c.get(key).is_some(), "check lacks {key}: {c}");
        }
    }
}

#[test]
fn validate_reports_no_arbitrage_on_shared_fixture() {
    let out = run(&["validate", &fixture("shared-scenario.json")]);
    assert_eq!(out.status.code(), Some(0));
    let d = doc(&out);
    assert_well_formed(&d);
    assert_eq!(d["outputs"]["nsa"]["holds"], true);
    assert_eq!(d["outputs"]["nsa"]["price_of_zero"], 0.0);
    assert_eq!(d["outputs"]["star_edges"].as_array().unwrap().len(), 1);
}

#[test]
fn validate_flags_arbitrage() {
    let out = run(&["validate", &fixture("nsa-violation.json")]);
    assert_eq!(out.status.code(), Some(1));
    let d = doc(&out);
    assert_eq!(d["outputs"]["nsa"]["dim"], 3);
    assert_eq!(d["outputs"]["nsa"]["lp_unbounded"], true);
    assert_eq!(d["outputs"]["nsa"]["price_of_zero"], "-inf");
    assert!(String::from_utf8_lossy(&out.stderr).contains("nsa.holds"));
    // pooled risk is not available without the precondition
    assert_eq!(run(&["lambda", &fixture("nsa-violation.json")]).status.code(), Some(2));
}

#[test]
fn lambda_on_shared_fixture() {
    let out = run(&["lambda", &fixture("shared-scenario.json")]);
    assert_eq!(out.status.code(), Some(0));
    let d = doc(&out);
    assert_well_formed(&d);
    assert!((d["outputs"]["value"].as_f64().unwrap() - 8.0).abs() < 1e-9);
    let z = vals(&d["outputs"]["payoff"], &["A", "B", "C"]);
    for (a, b) in z.iter().zip([3.0, 2.0, 3.0]) {
        assert!((a - b).abs() < 1e-9);
    }
    assert_eq!(d["passed"], true);
}

#[test]
fn rho_of_zero_for_normalized_agent() {
    let out = run(&["rho", &fixture("nsa-violation.json"), "--agent", "1", "--loss", r#"{"a":0,"b":0,"c":0}"#]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(doc(&out)["outputs"]["value"].as_f64().unwrap(), 0.0);
    let named = run(&["rho", &fixture("nsa-violation.json"), "--agent", "second", "--loss", r#"{"a":0,"b":0,"c":0}"#]);
    assert_eq!(doc(&named)["inputs"]["agent"], "second");
}

#[test]
fn lambda_matches_closed_forms_for_law_invariant_fixtures() {
    let d = doc(&run(&["lambda", &fixture("two-entropic.json")]));
    let labels = ["up", "mid", "low", "crash"];
    let x = vals(&d["inputs"]["loss"], &labels);
    let cf = lambda_two_entropic(1.5, 0.8, 1.4, &[true, true, false, false], &[0.25; 4], &x).unwrap();
    assert!((d["outputs"]["value"].as_f64().unwrap() - cf.value).abs() < 1e-9);

    let d = doc(&run(&["lambda", &fixture("avar-entropic.json")]));
    let labels = ["s1", "s2", "s3", "s4", "s5", "s6", "s7", "s8"];
    let x = vals(&d["inputs"]["loss"], &labels);
    let in_a: Vec<bool> = (0..8).map(|i| i < 3).collect();
    let q: Vec<f64> = in_a.iter().map(|&a| if a { 0.425 / 0.375 } else { 0.575 / 0.625 }).collect();
    let cf = solve_avar_entropic(0.5, 1.2, &in_a, &q, &[0.125; 8], &x).unwrap();
    assert!((d["outputs"]["value"].as_f64().unwrap() - cf.value).abs() < 1e-8);
}

#[test]
fn pareto_shift_family_stays_optimal() {
    for zeta in ["-2", "0", "0.75", "3"] {
        let out = run(&["pareto", &fixture("shared-scenario.json"), "--zeta", zeta]);
        assert_eq!(out.status.code(), Some(0), "zeta {zeta}");
        let d = doc(&out);
        assert!((d["outputs"]["risk_sum"].as_f64().unwrap() - 8.0).abs() < 1e-9);
        assert_eq!(d["outputs"]["shift"]["payoff"]["B"], 1.0);
    }
}

#[test]
fn equilibrium_on_shared_fixture() {
    let out = run(&["equilibrium", &fixture("shared-scenario.json")]);
    assert_eq!(out.status.code(), Some(0));
    let d = doc(&out);
    assert_well_formed(&d);
    assert!(d["checks"].as_array().unwrap().iter().any(|c| c["name"] == "budget.0"));
    // entropic agents are outside the joint program
    let e = r#"{"insurer":{"up":1,"mid":0,"low":0,"crash":0},"reinsurer":{"up":0,"mid":1,"low":1,"crash":1}}"#;
    assert_eq!(run(&["equilibrium", &fixture("two-entropic.json"), "--endowments", e]).status.code(), Some(2));
}

#[test]
fn split_picks_two_subsidiaries() {
    let d = doc(&run(&["split", &fixture("split.json")]));
    assert_eq!(d["outputs"]["n_star"], 2);
    assert!((d["outputs"]["objective"].as_f64().unwrap() - 1.440229).abs() < 1e-6);
    assert_eq!(d["outputs"]["allocation"].as_array().unwrap().len(), 2);
}

#[test]
fn oracle_checks_pass_on_fixtures() {
    for (f, check) in [
        ("shared-scenario.json", "lambda"),
        ("shared-scenario.json", "pareto"),
        ("shared-scenario.json", "subgradient"),
        ("two-entropic.json", "subgradient"),
        ("avar-entropic.json", "subgradient"),
    ] {
        let out = run(&["oracle", &fixture(f), "--check", check]);
        assert_eq!(out.status.code(), Some(0), "{f} {check}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn reruns_are_byte_identical() {
    for args in [
        vec!["validate", "--seed", "7"],
        vec!["oracle", "--check", "subgradient", "--seed", "3"],
        vec!["lambda"],
    ] {
        let mut a = args.clone();
        let f = fixture("avar-entropic.json");
        a.insert(1, &f);
        let first = run(&a);
        let second = run(&a);
        assert_eq!(first.stdout, second.stdout);
        assert!(!first.stdout.is_empty());
    }
}

#[test]
fn exit_codes_follow_error_classes() {
    let f = fixture("shared-scenario.json");
    // missing label
    let out = run(&["lambda", &f, "--loss", r#"{"A":1,"B":2}"#]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing scenario label 'C'"));
    // unknown label
    assert_eq!(run(&["lambda", &f, "--loss", r#"{"A":1,"B":2,"C":3,"D":0}"#]).status.code(), Some(1));
    // unknown agent and bad flags
    assert_eq!(run(&["rho", &f, "--agent", "nobody"]).status.code(), Some(1));
    assert_eq!(run(&["lambda", &f, "--tol", "-1"]).status.code(), Some(1));
    assert_eq!(run(&["lambda"]).status.code(), Some(1));
    assert_eq!(run(&["lambda", "/nonexistent.json"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    // grid search handles two agents only
    assert_eq!(run(&["oracle", &fixture("nsa-violation.json"), "--check", "lambda"]).status.code(), Some(2));
}

#[test]
fn failed_certification_exits_numerical() {
    // exit code and the document's verdict always agree
    for tol in ["1e-8", "1e-300"] {
        let out = run(&["lambda", &fixture("avar-entropic.json"), "--tol", tol]);
        let d = doc(&out);
        let expect = if d["passed"] == true { 0 } else { 3 };
        assert_eq!(out.status.code(), Some(expect), "tol {tol}");
        assert_eq!(d["tolerance"].as_f64().unwrap(), tol.parse::<f64>().unwrap());
    }
}

#[test]
fn malformed_problem_is_rejected() {
    let dir = std::env::temp_dir().join(format!("riskshare-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p.to_string_lossy().into_owned()
    };
    let extra = write("extra.json", r#"{"scenarios":{"labels":["a"]},"agents":[{"name":"x","acceptance":"expectation"}],"bogus":1}"#);
    assert_eq!(run(&["validate", &extra]).status.code(), Some(1));
    let dup = write("dup.json", r#"{"scenarios":{"labels":["a","b"]},"agents":[{"name":"x","acceptance":"expectation"},{"name":"x","acceptance":"expectation"}]}"#);
    let out = run(&["validate", &dup]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate agent name"));
    let bad_support = write(
        "support.json",
        r#"{"scenarios":{"labels":["a","b"]},"agents":[{"name":"x","support":["c"],"acceptance":{"polyhedral":[{"weights":{"a":1},"bound":0}]}}]}"#,
    );
    assert_eq!(run(&["validate", &bad_support]).status.code(), Some(1));
    let ok = write("ok.json", r#"{"scenarios":{"labels":["a","b"]},"agents":[{"name":"x","acceptance":"expectation"}],"loss":{"a":1,"b":3}}"#);
    let d = doc(&run(&["rho", &ok, "--agent", "x"]));
    assert!((d["outputs"]["value"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    std::fs::remove_dir_all(&dir).unwrap();
}
