use std::path::PathBuf;
use std::process::{Command, Output};

fn xferop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xferop")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn tent_text() -> String {
    xferop::bundled::text("tent_std").unwrap().to_string()
}

#[test]
fn spectrum_lists_top_stratum_dimension() {
    let o = xferop(&["spectrum", "--spec", "tent_std.spec", "--n", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("stratum k=3 (top): [0,1]"), "{s}");
    assert!(s.contains("pi^3_1  dim 4"), "{s}");
    let csv = stdout(&xferop(&["spectrum", "--spec", "tent_std", "--n", "3", "--format", "csv"]));
    assert!(csv.starts_with("k,y,dimension\n"));
    assert!(csv.lines().any(|l| l == "3,1,4"), "{csv}");
}

#[test]
fn spectrum_tent_half_warns() {
    let s = stdout(&xferop(&["spectrum", "--spec", "tent_half", "--n", "1"]));
    assert!(s.contains("warning:"), "{s}");
}

#[test]
fn verdict_exit_codes() {
    let o = xferop(&["check", "simple", "--spec", "tent_std", "--depth", "8"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Simple: Holds"));
    let o = xferop(&["check", "free", "--spec", "loop1", "--depth", "8"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("circuit"));
    let o = xferop(&["check", "contracting", "--spec", "halving", "--depth", "8"]);
    assert!(matches!(o.status.code(), Some(1) | Some(2)));
}

#[test]
fn input_errors_exit_three() {
    let o = xferop(&["check", "free", "--spec", "no_such_system"]);
    assert_eq!(o.status.code(), Some(3));
    let o = xferop(&["check", "free", "--spec", "tent_std", "--depth", "99"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("exceeds configured bound"));
    let o = xferop(&["check", "positive-energy", "--spec", "tent_std"]);
    assert_eq!(o.status.code(), Some(3));
    let o = xferop(&["relations", "--spec", "tent_std", "--tol", "0"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn validation_defects_are_reported() {
    let d = scratch("invalid");
    let bad = tent_text().replace(r#""slope": "-2", "intercept": "2""#, r#""slope": "-3", "intercept": "3""#);
    let p = d.join("steep.json");
    std::fs::write(&p, bad).unwrap();
    let o = xferop(&["validate", "--spec", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("not inside X"), "{}", stdout(&o));
    let o = xferop(&["region", "--spec", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("defect"));
    let o = xferop(&["validate", "--spec", "doubling"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn roundtrip_canonicalizes() {
    let d = scratch("roundtrip");
    let p = d.join("t.json");
    std::fs::write(&p, tent_text().replacen(r#""hi": "1/2""#, r#""hi": "2/4""#, 1)).unwrap();
    let o = xferop(&["roundtrip", "--spec", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let first = stdout(&o);
    assert!(!first.contains("2/4") && first.contains("\"1/2\""));
    let q = d.join("t2.json");
    std::fs::write(&q, &first).unwrap();
    assert_eq!(stdout(&xferop(&["roundtrip", "--spec", q.to_str().unwrap()])), first);

    let r = d.join("bad.json");
    std::fs::write(&r, tent_text().replacen(r#""lo": "0""#, r#""lo": "3""#, 1)).unwrap();
    let o = xferop(&["roundtrip", "--spec", r.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("space[0]"), "{}", stderr(&o));
}

#[test]
fn reports_are_deterministic() {
    let args = ["relations", "--spec", "doubling", "--depth", "4", "--count", "5", "--seed", "7"];
    let a = xferop(&args);
    let b = xferop(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("seed: 7"));
}

#[test]
fn conformal_then_kms_verify() {
    let d = scratch("kms");
    let o = xferop(&[
        "conformal", "--spec", "tent_std", "--psi", "one", "--solve", "--bracket", "0.1,3", "--bins", "128", "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    let beta: f64 = s.lines().find_map(|l| l.strip_prefix("beta: ")).unwrap().parse().unwrap();
    assert!((beta - 2f64.ln()).abs() < 1e-8);
    assert!(d.join("measure.csv").exists() && d.join("report.txt").exists());
    let cand = d.join("candidate.json");
    let o = xferop(&["kms-verify", "--candidate", cand.to_str().unwrap(), "--battery", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("pairs: 6"));

    let o = xferop(&["conformal", "--spec", "tent_std", "--psi", "one", "--beta", "1", "--bins", "64"]);
    assert_eq!(o.status.code(), Some(1));
    let o = xferop(&["conformal", "--spec", "tent_std", "--psi", "zero", "--solve", "--bracket", "0.1,3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn groupoid_subcommands() {
    let o = xferop(&["groupoid", "build", "--spec", "fullshift2", "--depth", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("elements: 352 (enumeration oracle 352)"));
    let csv = stdout(&xferop(&["groupoid", "build", "--spec", "fullshift2", "--depth", "2", "--format", "csv"]));
    assert!(csv.starts_with("x,k,y,n,m\n"));
    assert_eq!(xferop(&["groupoid", "build", "--spec", "tent_std"]).status.code(), Some(3));
    let o = xferop(&["groupoid", "build", "--spec", "tent_std", "--restrict-regular", "--depth", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("restricted"));
    assert_eq!(xferop(&["groupoid", "gap", "--spec", "doubling", "--depth", "3"]).status.code(), Some(0));
    assert_eq!(xferop(&["groupoid", "iso-check", "--spec", "fullshift2", "--depth", "4", "--count", "5"]).status.code(), Some(0));
    assert_eq!(xferop(&["groupoid", "graph-gen", "--spec", "loops2", "--depth", "4"]).status.code(), Some(0));
}

#[test]
fn misc_commands_run() {
    for args in [
        vec!["region", "--spec", "tent_half"],
        vec!["domain", "--spec", "halving"],
        vec!["rep", "orbit", "--spec", "tent_std", "--depth", "3"],
        vec!["rep", "regular", "--spec", "loop1", "--depth", "3"],
        vec!["quasi-orbits", "--spec", "loops2"],
        vec!["report", "--spec", "fullshift2", "--depth", "4"],
        vec!["check", "positive-energy", "--spec", "tent_std", "--psi", "1"],
    ] {
        let o = xferop(&args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    }
    let s = stdout(&xferop(&["region", "--spec", "tent_half"]));
    assert!(s.contains("irregular 1/2"), "{s}");
}
