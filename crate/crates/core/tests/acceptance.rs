//! Acceptance criteria 1-7, one PASS/FAIL line each.

mod common;
use common::*;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rexcess::boundary::{classify_both, scale_limit, BoundaryKind};
use rexcess::martingale::{
    direction_for, expected_regime, row_b_from, row_c_from, row_d_from, row_e_from, row_f_from,
};
use rexcess::mc::{martingale_deficit, scale_deficit, simulate, SimulationConfig};
use rexcess::pipeline::{verify, VerifyRequest};
use rexcess::{
    catalog_with, derive_scale_speed, full_report, kotani_verdict, solve_excessive, Direction,
    DiscountRate, GridSpec, Side, Verdict,
};
use std::io::Write;
use std::time::{Duration, Instant};

fn rate(r: f64) -> DiscountRate {
    DiscountRate::new(r).unwrap()
}

/// Written straight to stderr so the lines survive output capture.
fn line(text: String) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{text}");
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn classification() -> Outcome {
    use BoundaryKind::*;
    let expected = [
        ("brownian", InaccessibleNatural, InaccessibleNatural),
        ("gbm", InaccessibleNatural, InaccessibleNatural),
        ("bessel3", InaccessibleEntrance, InaccessibleNatural),
        ("cir111", InaccessibleEntrance, InaccessibleNatural),
        ("cir112", Accessible, InaccessibleNatural),
        ("ou", InaccessibleNatural, InaccessibleNatural),
    ];
    let start = Instant::now();
    let mut wrong = Vec::new();
    for ((name, spec), (_, ka, kb)) in catalog().iter().zip(expected) {
        match classify_both(&derive_scale_speed(spec).unwrap()) {
            Ok((a, b)) if a.kind == ka && b.kind == kb => {}
            Ok((a, b)) => wrong.push(format!("{name}: {} / {}", a.kind, b.kind)),
            Err(e) => wrong.push(format!("{name}: {e}")),
        }
    }
    let t = start.elapsed();
    check(
        wrong.is_empty() && within(t, 10.0),
        format!(
            "{} misclassified {wrong:?}, {:.2}s (< 10s)",
            wrong.len(),
            t.as_secs_f64()
        ),
    )
}

fn closed_forms() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_case = String::new();
    for r in [0.5f64, 1.0] {
        let k = (2.0 * r).sqrt();
        let (gm, gp) = gbm_roots(0.1, 0.3, r);
        type Exact = Box<dyn Fn(f64) -> f64>;
        let cases: Vec<(&str, rexcess::DiffusionSpec, Exact, Exact)> = vec![
            (
                "brownian",
                brownian(),
                Box::new(move |x| (k * x).exp()),
                Box::new(move |x| (-k * x).exp()),
            ),
            (
                "gbm",
                catalog_with("gbm", &[("mu", 0.1), ("sigma", 0.3)]).unwrap(),
                Box::new(move |x: f64| x.powf(gp)),
                Box::new(move |x: f64| x.powf(gm)),
            ),
            (
                "bessel3",
                bessel3(),
                Box::new(move |x: f64| (k * x).sinh() / (x * k.sinh())),
                Box::new(move |x: f64| (k * (1.0 - x)).exp() / x),
            ),
        ];
        for (name, spec, psi, phi) in &cases {
            let ss = derive_scale_speed(spec).unwrap();
            for (d, exact) in [(Direction::Increasing, psi), (Direction::Decreasing, phi)] {
                let f = solve_excessive(&ss, rate(r), d, &GridSpec::default()).unwrap();
                let n = f.len();
                for i in n / 10..n - n / 10 {
                    let e = (f.log_values[i].exp() / exact(f.grid[i]) - 1.0).abs();
                    if e > worst || e.is_nan() {
                        worst = e;
                        worst_case = format!("{name} {d} r={r} x={:.4}", f.grid[i]);
                    }
                }
            }
        }
    }
    let t = start.elapsed();
    check(
        worst <= 1e-6 && within(t, 30.0),
        format!(
            "worst relative error {worst:.2e} (<= 1e-6) at {worst_case}, {:.2}s (< 30s)",
            t.as_secs_f64()
        ),
    )
}

fn concordance() -> Outcome {
    let rates = [rate(0.5), rate(1.0), rate(2.0)];
    let mut bad = Vec::new();
    let mut rows = 0;
    for (name, spec) in catalog() {
        let report = match full_report(&spec, &rates) {
            Ok(r) => r,
            Err(e) => {
                bad.push(format!("{name}: {e}"));
                continue;
            }
        };
        for side in [&report.alpha, &report.beta] {
            let Some(column) = expected_regime(side.class.kind) else {
                continue;
            };
            for w in &side.rows {
                rows += 1;
                if w.regime != column {
                    bad.push(format!("{name} {} row {}: {}", side.side, w.row, w.regime));
                }
            }
            if side.concordant != Some(true) {
                bad.push(format!("{name} {}: not concordant", side.side));
            }
        }
    }
    check(
        bad.is_empty() && rows > 0,
        format!("{rows} row witnesses, {} off-column {bad:?}", bad.len()),
    )
}

fn mc_martingale_test() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    let run = |spec, side, x| {
        let start = Instant::now();
        let doc = verify(
            &spec,
            &VerifyRequest {
                side,
                r: rate(0.5),
                s: None,
                simulation: SimulationConfig::new(x, 1.0, 1e-3, 100_000, 20_240_601).unwrap(),
                profile_points: 0,
            },
        )
        .unwrap();
        (doc.deficit, start.elapsed())
    };
    for side in [Side::Beta, Side::Alpha] {
        let (d, t) = run(brownian(), side, 0.0);
        let ok = d.mean.abs() < 3.0 * d.half_width && d.half_width < 2e-2 && within(t, 60.0);
        pass &= ok;
        parts.push(format!(
            "brownian {side}: {:.4} +/- {:.4}, {:.1}s",
            d.mean,
            d.half_width,
            t.as_secs_f64()
        ));
    }
    let oracle = 1.0 - bessel3_phi_pde(0.5, 1.0, 1.0, 1.0, 20.0, 4000, 2000);
    let (d, t) = run(bessel3(), Side::Alpha, 1.0);
    let ok = d.mean > 5.0 * d.half_width
        && (d.mean - oracle).abs() < 4.0 * d.half_width
        && within(t, 60.0);
    pass &= ok;
    parts.push(format!(
        "bessel3 phi: {:.4} +/- {:.4} vs oracle {oracle:.4}, {:.1}s",
        d.mean,
        d.half_width,
        t.as_secs_f64()
    ));
    check(pass, parts.join("; "))
}

fn ratio_identity() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, spec, side, x) in [
        ("brownian", brownian(), Side::Beta, 0.0),
        ("bessel3", bessel3(), Side::Alpha, 1.0),
    ] {
        let doc = verify(
            &spec,
            &VerifyRequest {
                side,
                r: rate(0.5),
                s: Some(rate(1.0)),
                simulation: SimulationConfig::new(x, 20.0, 1e-2, 20_000, 20_240_601).unwrap(),
                profile_points: 0,
            },
        );
        match doc {
            Ok(doc) => {
                let id = doc.ratio_identity.unwrap();
                pass &= id.agrees(4.0);
                parts.push(format!(
                    "{name} {side}: lhs {:.4} rhs {:.4} +/- {:.4}",
                    id.lhs, id.rhs.mean, id.rhs.half_width
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    check(pass, parts.join("; "))
}

fn kotani() -> Outcome {
    let cfg = |x| SimulationConfig::new(x, 1.0, 1e-3, 100_000, 20_240_601).unwrap();
    let b = scale_deficit(&brownian(), cfg(0.0)).unwrap();
    let ss = derive_scale_speed(&bessel3()).unwrap();
    let (ca, cb) = classify_both(&ss).unwrap();
    let verdict = kotani_verdict(&ca, &cb).verdict;
    let s = scale_deficit(&bessel3(), cfg(1.0)).unwrap();
    // p(X) = 1 - 1/X is a strict submartingale: p(x) - E p(X_t) < 0.
    let signed = match verdict {
        Verdict::Submartingale => -s.mean,
        Verdict::Supermartingale => s.mean,
        _ => f64::NAN,
    };
    check(
        b.contains(0.0) && signed > 5.0 * s.half_width,
        format!(
            "brownian {:.4} +/- {:.4}; bessel3 {:.4} +/- {:.4} ({verdict})",
            b.mean, b.half_width, s.mean, s.half_width
        ),
    )
}

fn invariants() -> Outcome {
    let grid = GridSpec::default();
    let mut worst = 0.0f64;
    let mut solves = 0;
    for (_, spec) in catalog() {
        let ss = derive_scale_speed(&spec).unwrap();
        for r in [0.5, 1.0, 2.0] {
            for d in [Direction::Increasing, Direction::Decreasing] {
                let f = solve_excessive(&ss, rate(r), d, &grid).unwrap();
                let res = f.ode_residuals(&ss).unwrap();
                worst = res.iter().fold(worst, |w, v| w.max(v.abs()));
                solves += 1;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cases = catalog();
    let mut changed = Vec::new();
    for trial in 0..10 {
        let (name, spec) = &cases[trial % cases.len()];
        let ss = derive_scale_speed(spec).unwrap();
        let (c1, c2) = (
            10f64.powf(rng.gen_range(-6.0..6.0)),
            10f64.powf(rng.gen_range(-6.0..6.0)),
        );
        let (ca, cb) = classify_both(&ss).unwrap();
        for (side, class) in [(Side::Alpha, ca), (Side::Beta, cb)] {
            if class.kind == BoundaryKind::Accessible {
                continue;
            }
            let d = direction_for(side);
            let fr = solve_excessive(&ss, rate(0.5), d, &grid).unwrap();
            let fs = solve_excessive(&ss, rate(1.0), d, &grid).unwrap();
            let (gr, gs) = (fr.rescaled(c1), fs.rescaled(c2));
            let p_finite = scale_limit(&ss, side).unwrap().is_finite();
            let x = spec.reference_point;
            let before = [
                row_b_from(&ss, &grid, &fr, &fs, side).unwrap().regime,
                row_c_from(&ss, &grid, &fr, side, p_finite).unwrap().regime,
                row_d_from(&ss, &grid, &fr, &fs, side).unwrap().regime,
                row_e_from(&ss, &grid, &fr, side).unwrap().regime,
            ];
            let after = [
                row_b_from(&ss, &grid, &gr, &gs, side).unwrap().regime,
                row_c_from(&ss, &grid, &gr, side, p_finite).unwrap().regime,
                row_d_from(&ss, &grid, &gr, &gs, side).unwrap().regime,
                row_e_from(&ss, &grid, &gr, side).unwrap().regime,
            ];
            let f_before = row_f_from(&ss, &grid, &fr, side, x).unwrap().diverged;
            let f_after = row_f_from(&ss, &grid, &gr, side, x).unwrap().diverged;
            if before != after || f_before != f_after {
                changed.push(format!("{name} {side} c=({c1:.1e}, {c2:.1e})"));
            }
        }
    }

    let spec = bessel3();
    let cfg = SimulationConfig::new(1.0, 0.5, 1e-3, 2_000, 99).unwrap();
    let a = simulate(&spec, cfg).unwrap();
    let b = simulate(&spec, cfg).unwrap();
    let same_paths = a.states.iter().flatten().map(|v| v.to_bits()).eq(b
        .states
        .iter()
        .flatten()
        .map(|v| v.to_bits()));
    let ss = derive_scale_speed(&spec).unwrap();
    let f = solve_excessive(&ss, rate(0.5), Direction::Decreasing, &grid).unwrap();
    let big = SimulationConfig::new(1.0, 1.0, 1e-3, 20_000, 99).unwrap();
    let (d1, d2) = (
        martingale_deficit(&spec, &f, big).unwrap(),
        martingale_deficit(&spec, &f, big).unwrap(),
    );
    let same_estimate = d1.mean.to_bits() == d2.mean.to_bits()
        && d1.half_width.to_bits() == d2.half_width.to_bits();

    check(
        worst <= 1e-8 && changed.is_empty() && same_paths && same_estimate,
        format!(
            "max ODE residual {worst:.2e} over {solves} solves (<= 1e-8); \
             10 rescalings, regime changes {changed:?}; \
             bit-identical paths {same_paths}, estimates {same_estimate}"
        ),
    )
}

#[test]
fn acceptance_criteria() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 7] = [
        ("boundary classification", classification),
        ("closed-form excessive functions", closed_forms),
        ("row concordance", concordance),
        ("Monte Carlo martingale test", mc_martingale_test),
        ("ratio identity", ratio_identity),
        ("scale-process criterion", kotani),
        ("invariant suites", invariants),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        line(format!("{tag} criterion {}: {name}: {}", i + 1, o.detail));
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
