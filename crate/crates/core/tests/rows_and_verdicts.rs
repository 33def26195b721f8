mod common;
use common::*;
use rexcess::boundary::{classify_both, BoundaryKind};
use rexcess::martingale::{expected_regime, row_b, row_b_from, row_c, row_e, Regime};
use rexcess::{
    catalog_with, custom, derive_scale_speed, full_report, kotani_verdict, solve_excessive,
    Direction, DiscountRate, GridSpec, IntervalSpec, Side, Verdict,
};

fn rate(r: f64) -> DiscountRate {
    DiscountRate::new(r).unwrap()
}

#[test]
fn rows_agree_with_the_classification_on_the_catalog() {
    let rates = [rate(0.5), rate(1.0), rate(2.0)];
    for (name, spec) in catalog() {
        let report = full_report(&spec, &rates).unwrap();
        for side in [&report.alpha, &report.beta] {
            match expected_regime(side.class.kind) {
                None => {
                    assert!(side.rows.is_empty());
                    assert_eq!(side.concordant, None);
                }
                Some(expected) => {
                    // Three pairs for rows B and D, three rates for rows C, E and F.
                    assert_eq!(side.rows.len(), 15, "{name} {}", side.side);
                    for w in &side.rows {
                        assert_eq!(w.regime, expected, "{name} {} row {}", side.side, w.row);
                    }
                    assert_eq!(side.concordant, Some(true));
                }
            }
        }
    }
}

#[test]
fn row_b_examples() {
    let ss = derive_scale_speed(&brownian()).unwrap();
    assert_eq!(
        row_b(&ss, rate(0.5), rate(1.0), Side::Beta).unwrap().regime,
        Regime::DivergesToInfinity
    );
    let ss = derive_scale_speed(&bessel3()).unwrap();
    let b = row_b(&ss, rate(0.5), rate(1.0), Side::Alpha).unwrap();
    assert_eq!(b.regime, Regime::FinitePositive);
    // phi_s / phi_r = e^{(k_s - k_r)(1 - x)} with k = sqrt(2r), normalized at 1.
    let exact = (2f64.sqrt() - 1.0).exp();
    assert!((b.value / exact - 1.0).abs() < 1e-6, "{}", b.value);

    let g = GridSpec::default();
    let f = solve_excessive(&ss, rate(0.5), Direction::Decreasing, &g).unwrap();
    let same = row_b_from(&ss, &g, &f, &f, Side::Alpha).unwrap();
    assert_eq!(same.regime, Regime::FinitePositive);
    assert_eq!(same.value, 1.0);
}

#[test]
fn rows_c_and_e_ignore_the_anchor_of_p() {
    for (family, params) in [
        ("bessel", vec![("delta", 3.0)]),
        ("cir", vec![("kappa", 1.0), ("theta", 1.0), ("sigma", 1.0)]),
        ("brownian", vec![]),
    ] {
        let regimes = |x0: f64| {
            let mut p = params.clone();
            p.push(("x0", x0));
            let ss = derive_scale_speed(&catalog_with(family, &p).unwrap()).unwrap();
            [Side::Alpha, Side::Beta].map(|side| {
                (
                    row_c(&ss, rate(1.0), side).unwrap().regime,
                    row_e(&ss, rate(1.0), side).unwrap().regime,
                )
            })
        };
        assert_eq!(regimes(0.5), regimes(2.5), "{family}");
    }
}

#[test]
fn scale_process_verdicts() {
    let verdict = |spec: &rexcess::DiffusionSpec| {
        let (a, b) = classify_both(&derive_scale_speed(spec).unwrap()).unwrap();
        kotani_verdict(&a, &b)
    };
    assert_eq!(verdict(&brownian()).verdict, Verdict::Martingale);
    let v = verdict(&bessel3());
    assert_eq!(v.verdict, Verdict::Submartingale);
    assert_eq!(
        (v.supermartingale, v.submartingale),
        (Some(false), Some(true))
    );
    // Wright-Fisher with mutation rates 1: both endpoints are entrances.
    let wf = custom(
        IntervalSpec::open(0.0, 1.0).unwrap(),
        "1 - 2*x",
        "sqrt(x*(1-x))",
        0.5,
    )
    .unwrap();
    let (a, b) = classify_both(&derive_scale_speed(&wf).unwrap()).unwrap();
    assert_eq!(
        (a.kind, b.kind),
        (
            BoundaryKind::InaccessibleEntrance,
            BoundaryKind::InaccessibleEntrance
        )
    );
    let v = kotani_verdict(&a, &b);
    assert_eq!(v.verdict, Verdict::StrictLocalMartingale);
    assert_eq!(
        (v.supermartingale, v.submartingale),
        (Some(false), Some(false))
    );
}
