use rexcess::boundary::BoundaryKind;
use rexcess::pipeline::{ClassifyDoc, ReportDoc, SolveDoc, VerdictDoc, VerifyDoc};
use rexcess::{FullReport, Verdict};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::process::{Command, Output};

fn rexcess(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rexcess"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Parses typed JSON and checks that re-serializing reproduces it byte for byte.
fn round_trip<T: Serialize + DeserializeOwned>(out: &Output) -> T {
    let text = stdout(out);
    let doc: T = serde_json::from_str(&text).unwrap();
    let again = serde_json::to_string_pretty(&doc).unwrap();
    let text = text.trim_end();
    if let Some(i) = again.bytes().zip(text.bytes()).position(|(a, b)| a != b) {
        let lo = i.saturating_sub(80);
        panic!(
            "differs at byte {i}:\n{}\n---\n{}",
            &again[lo..(i + 80).min(again.len())],
            &text[lo..(i + 80).min(text.len())]
        );
    }
    assert_eq!(again.len(), text.len());
    doc
}

#[test]
fn classify_brownian() {
    let out = rexcess(&["--family", "brownian", "classify"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.matches("InaccessibleNatural").count(), 2, "{text}");

    let out = rexcess(&["--family", "brownian", "--json", "classify"]);
    let doc: ClassifyDoc = round_trip(&out);
    assert_eq!(doc.alpha.kind, BoundaryKind::InaccessibleNatural);
    assert_eq!(doc.beta.kind, BoundaryKind::InaccessibleNatural);
}

#[test]
fn typed_documents_round_trip() {
    let bessel = ["--family", "bessel", "--param", "delta=3", "--json"];
    let run = |extra: &[&str]| {
        let args: Vec<&str> = bessel.iter().chain(extra).copied().collect();
        let out = rexcess(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        out
    };
    let _: SolveDoc = round_trip(&run(&["solve", "--function", "phi"]));
    let _: SolveDoc = round_trip(&run(&["solve", "--log-space"]));
    let _: FullReport = round_trip(&run(&["table"]));
    let v: VerdictDoc = round_trip(&run(&["verdict"]));
    assert_eq!(v.alpha.verdict, Verdict::StrictLocalMartingale);
    let d: VerifyDoc = round_trip(&run(&[
        "verify", "--side", "alpha", "--t", "0.2", "--dt", "0.002", "--paths", "2000",
    ]));
    assert!(d.agrees);
}

#[test]
fn solve_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("psi.csv");
    let out = rexcess(&[
        "--family",
        "brownian",
        "solve",
        "--r",
        "0.5",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(&path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,p(x),value,dvalue_dp"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() > 10);
    for r in &rows {
        // psi = e^x, p = x
        assert!((r[0] - r[1]).abs() <= 1e-12 * r[0].abs().max(1.0), "{r:?}");
        if r[0].abs() < 20.0 {
            assert!((r[2] / r[0].exp() - 1.0).abs() < 1e-6, "{r:?}");
        }
    }

    let out = rexcess(&["--family", "brownian", "solve", "--log-space"]);
    assert!(stdout(&out).starts_with("x,p(x),log_value,log_abs_dvalue_dp\n"));
}

#[test]
fn exit_codes() {
    assert_eq!(code(&rexcess(&["--family", "nope", "classify"])), 1);
    assert_eq!(code(&rexcess(&["classify"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"diffusion": {"drift": "1/x", "interval": {"alpha": 0, "beta": "inf"}, "x0": 1}}"#,
    )
    .unwrap();
    let out = rexcess(&["--config", cfg.to_str().unwrap(), "classify"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("diffusion.volatility"));

    // The time integral is cut off far too early to resolve the identity.
    let out = rexcess(&[
        "--family", "bessel", "--param", "delta=3", "verify", "--side", "alpha", "--r", "0.5",
        "--s", "1", "--t", "0.1", "--dt", "0.01", "--paths", "1000",
    ]);
    assert_eq!(code(&out), 2);

    let out = rexcess(&["--family", "brownian", "solve", "--r", "1e300"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn bessel_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bessel.json");
    std::fs::write(
        &cfg,
        r#"{
  "diffusion": {"family": "bessel", "params": {"delta": 3}},
  "rates": [0.5],
  "simulation": {"horizon": 1, "step": 0.002, "paths": 10000, "seed": 3},
  "output": {"json": true}
}"#,
    )
    .unwrap();
    let out = rexcess(&["--config", cfg.to_str().unwrap(), "report"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc: ReportDoc = round_trip(&out);
    assert!(doc.all_agree());
    assert_eq!(doc.table.scale_process.verdict, Verdict::Submartingale);
    assert_eq!(doc.alpha.expected, Verdict::StrictLocalMartingale);
    assert_eq!(doc.beta.expected, Verdict::Martingale);
    assert!(doc.scale_process.deficit.mean < 0.0);
}
