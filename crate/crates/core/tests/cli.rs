use std::path::Path;
use std::process::{Command, Output};

use qinv::cli::{ReportFile, StateFile};

fn qinv(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qinv"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value_line(o: &Output) -> f64 {
    let text = stdout(o);
    let line = text.lines().find(|l| l.starts_with("value: ")).expect("value line");
    line["value: ".len()..].split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn compute_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(qinv(&["gen", "--dims", "2x2", "--kind", "bell", "--out", "bell.json"], d).status.code(), Some(0));
    assert_eq!(qinv(&["gen", "--dims", "2x2", "--kind", "maxmixed", "--out", "mm.json"], d).status.code(), Some(0));

    let o = qinv(&["compute", "--quantity", "I1", "--divergence", "umegaki", "--state", "bell.json"], d);
    assert_eq!(o.status.code(), Some(0));
    assert!((value_line(&o) - 2.0).abs() < 1e-9);
    assert!(stdout(&o).contains("exactness: exact"));
    assert!(stdout(&o).contains("converged: true"));

    let o = qinv(&["compute", "--quantity", "H1", "--divergence", "umegaki", "--state", "mm.json"], d);
    assert!((value_line(&o) - 1.0).abs() < 1e-9);

    let o = qinv(
        &["compute", "--quantity", "I1", "--divergence", "umegaki", "--state", "bell.json", "--log-base", "e"],
        d,
    );
    assert!((value_line(&o) - 2.0 * std::f64::consts::LN_2).abs() < 1e-9);
}

#[test]
fn compute_input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    qinv(&["gen", "--dims", "2x2", "--kind", "bell", "--out", "bell.json"], d);
    let cases: [&[&str]; 5] = [
        &["compute", "--quantity", "I3", "--divergence", "dh", "--state", "bell.json"],
        &["compute", "--quantity", "I1", "--divergence", "petz", "--state", "bell.json"],
        &["compute", "--quantity", "I1", "--divergence", "petz", "--alpha", "1", "--state", "bell.json"],
        &["compute", "--quantity", "I1", "--divergence", "umegaki", "--state", "missing.json"],
        &["compute", "--quantity", "I5", "--divergence", "umegaki", "--state", "bell.json"],
    ];
    for args in cases {
        let o = qinv(args, d);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
    std::fs::write(d.join("bad.json"), r#"{"dims":[1,2],"matrix":[[[1,0],[0,0]],[[0,0],[0.5,0]]]}"#).unwrap();
    let o = qinv(&["compute", "--quantity", "I1", "--divergence", "umegaki", "--state", "bad.json"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trace"));
}

#[test]
fn gen_is_deterministic_and_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = stdout(&qinv(&["gen", "--dims", "3x2", "--kind", "random", "--seed", "1"], d));
    let b = stdout(&qinv(&["gen", "--dims", "3x2", "--kind", "random", "--seed", "1"], d));
    assert_eq!(a, b);
    let file: StateFile = serde_json::from_str(&a).unwrap();
    let state = file.to_state().unwrap();
    assert_eq!(StateFile::from_state(&state), file);
    assert_eq!(qinv(&["gen", "--dims", "2x3", "--kind", "bell"], d).status.code(), Some(2));
    let pure = stdout(&qinv(&["gen", "--dims", "2x2", "--rank", "1", "--seed", "4"], d));
    let pure = serde_json::from_str::<StateFile>(&pure).unwrap().to_state().unwrap();
    assert!((pure.state().purity() - 1.0).abs() < 1e-12);
}

#[test]
fn audit_reports_are_deterministic_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["audit", "--checks", "all", "--samples", "3", "--seed", "7", "--dims", "2x2"];
    let first = qinv(&[&args[..], &["--out", "a.json"]].concat(), d);
    let second = qinv(&[&args[..], &["--out", "b.json"]].concat(), d);
    let a = std::fs::read_to_string(d.join("a.json")).unwrap();
    assert_eq!(a, std::fs::read_to_string(d.join("b.json")).unwrap());
    let report = ReportFile::parse(&a).unwrap();
    assert_eq!(report.to_json(), a);
    assert!(report.timings.is_none());
    // Only the mutation check may fail; if it does, `all` exits 1 while the suite still passes.
    assert!(report.records.iter().all(|r| r.pass || r.name == "mutation_dpi"));
    assert!(report.suite_pass || report.pass);
    let expected = if report.pass { 0 } else { 1 };
    assert_eq!(first.status.code(), Some(expected));
    assert_eq!(second.status.code(), Some(expected));
}

#[test]
fn audit_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = qinv(&["audit", "--checks", "lemma2", "--dims", "2x3", "--out", "r.json"], d);
    assert_eq!(o.status.code(), Some(0));
    let report = ReportFile::parse(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert!(report.records[0].worst_violation.unwrap() <= 1e-10);

    let o = qinv(&["audit", "--checks", "mutation_dpi"], d);
    assert_eq!(o.status.code(), Some(1));
    let report = ReportFile::parse(&stdout(&o)).unwrap();
    assert!(report.records[0].witness.is_some());
    assert!(report.suite_pass);

    assert_eq!(qinv(&["audit", "--checks", "dpi,bogus"], d).status.code(), Some(2));
    assert_eq!(qinv(&["audit", "--samples", "0"], d).status.code(), Some(2));
    assert_eq!(qinv(&["audit", "--dims", "7x7"], d).status.code(), Some(2));

    let o = qinv(&["audit", "--checks", "reversal", "--samples", "3", "--timing"], d);
    let report = ReportFile::parse(&stdout(&o)).unwrap();
    assert!(report.timings.unwrap().contains_key("reversal"));
}
