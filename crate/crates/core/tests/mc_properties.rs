mod common;
use common::*;

use rexcess::boundary::{classify_both, BoundaryKind};
use rexcess::martingale::{direction_for, row_b_from, verdict_from_boundary};
use rexcess::mc::{
    deficit_profile_with, deficit_verdict, hitting_laplace, martingale_deficit_with,
    ratio_identity_with, scale_deficit, simulate, DeficitVerdict, SimulationConfig, Simulator, Z99,
};
use rexcess::pipeline::outcome_matches;
use rexcess::{derive_scale_speed, solve_excessive, DiscountRate, GridSpec, Side};

fn rate(r: f64) -> DiscountRate {
    DiscountRate::new(r).unwrap()
}

fn cfg(x: f64, t: f64, dt: f64, n: usize, seed: u64) -> SimulationConfig {
    SimulationConfig::new(x, t, dt, n, seed).unwrap()
}

#[test]
fn same_seed_same_bits() {
    let spec = bessel3();
    let c = cfg(1.0, 0.2, 1e-3, 200, 11);
    let a = simulate(&spec, c).unwrap();
    let b = simulate(&spec, c).unwrap();
    assert_eq!(a.states.len(), b.states.len());
    for (pa, pb) in a.states.iter().zip(&b.states) {
        let same = pa.iter().zip(pb).all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same);
    }
    let other = simulate(&spec, SimulationConfig { seed: 12, ..c }).unwrap();
    assert_ne!(a.states[0], other.states[0]);
}

#[test]
fn zero_horizon_has_zero_deficit() {
    let spec = bessel3();
    let ss = derive_scale_speed(&spec).unwrap();
    let f = solve_excessive(
        &ss,
        rate(0.5),
        direction_for(Side::Alpha),
        &GridSpec::default(),
    )
    .unwrap();
    let c = SimulationConfig::new(1.0, 0.0, 1e-3, 100, 1).unwrap();
    let sim = Simulator::new(&spec, c).unwrap();
    let d = martingale_deficit_with(&sim, &f).unwrap();
    assert_eq!(d.mean, 0.0);
    assert_eq!(deficit_verdict(&d), DeficitVerdict::MartingaleConsistent);
}

#[test]
fn deficits_are_not_significantly_negative_on_the_catalog() {
    let grid = GridSpec::default();
    for (name, spec) in catalog() {
        let ss = derive_scale_speed(&spec).unwrap();
        let (ca, cb) = classify_both(&ss).unwrap();
        let sim = Simulator::with_absorbing(
            &spec,
            cfg(spec.reference_point, 0.5, 1e-3, 4000, 3),
            ca.kind == BoundaryKind::Accessible,
            cb.kind == BoundaryKind::Accessible,
        )
        .unwrap();
        for side in [Side::Alpha, Side::Beta] {
            let f = solve_excessive(&ss, rate(0.5), direction_for(side), &grid).unwrap();
            let d = martingale_deficit_with(&sim, &f).unwrap();
            assert!(d.mean > -d.half_width, "{name} {side}: {d:?}");
        }
    }
}

/// Two-sided normal quantile at 1 - 0.01/12: twelve checks share the 1% budget.
const BONFERRONI_12: f64 = 3.341_478_956_038_625_5;

#[test]
fn verdicts_agree_with_deficit_tests_on_the_catalog() {
    let grid = GridSpec::default();
    for (name, spec) in catalog() {
        let ss = derive_scale_speed(&spec).unwrap();
        let (ca, cb) = classify_both(&ss).unwrap();
        let sim = Simulator::with_absorbing(
            &spec,
            cfg(spec.reference_point, 1.0, 2e-4, 10_000, 5),
            ca.kind == BoundaryKind::Accessible,
            cb.kind == BoundaryKind::Accessible,
        )
        .unwrap();
        for (side, class) in [(Side::Alpha, &ca), (Side::Beta, &cb)] {
            let expected = verdict_from_boundary(class, side, false).verdict;
            let f = solve_excessive(&ss, rate(0.5), direction_for(side), &grid).unwrap();
            let mut d = martingale_deficit_with(&sim, &f).unwrap();
            d.half_width *= BONFERRONI_12 / Z99;
            assert!(
                outcome_matches(deficit_verdict(&d), expected),
                "{name} {side}: {expected:?} vs {d:?}"
            );
        }
    }
}

#[test]
fn bessel_deficit_grows_with_time() {
    let spec = bessel3();
    let ss = derive_scale_speed(&spec).unwrap();
    let f = solve_excessive(
        &ss,
        rate(0.5),
        direction_for(Side::Alpha),
        &GridSpec::default(),
    )
    .unwrap();
    let sim = Simulator::new(&spec, cfg(1.0, 1.0, 1e-3, 20_000, 9)).unwrap();
    let profile = deficit_profile_with(&sim, &f, &[0.25, 0.5, 1.0]).unwrap();
    for w in profile.windows(2) {
        assert!(w[1].deficit.mean > w[0].deficit.mean, "{profile:?}");
    }
    for p in &profile {
        let exact = bessel3_phi_deficit(0.5, 1.0, p.t);
        assert!(
            (p.deficit.mean - exact).abs() < 4.0 * p.deficit.half_width,
            "t={} {:?} vs {exact}",
            p.t,
            p.deficit
        );
    }
}

fn bessel3_phi_deficit(r: f64, x: f64, t: f64) -> f64 {
    (-(2.0 * r).sqrt() * (x - 1.0)).exp() / x - bessel3_phi_expectation(r, x, t, 1.0)
}

#[test]
fn longer_horizons_censor_fewer_paths() {
    let spec = brownian();
    let y = 1.0;
    let short = hitting_laplace(&spec, y, rate(0.5), cfg(0.0, 1.0, 1e-2, 4000, 2)).unwrap();
    let long = hitting_laplace(&spec, y, rate(0.5), cfg(0.0, 8.0, 1e-2, 4000, 2)).unwrap();
    assert!(long.mean > short.mean);
}

#[test]
fn brownian_hitting_transform() {
    let spec = brownian();
    let est = hitting_laplace(&spec, 1.0, rate(0.5), cfg(0.0, 20.0, 1e-2, 4000, 4)).unwrap();
    let exact = (-1.0f64).exp();
    assert!(
        (est.mean - exact).abs() < 4.0 * est.half_width,
        "{est:?} vs {exact}"
    );
}

#[test]
fn bessel_hitting_transform_is_the_psi_ratio() {
    let spec = bessel3();
    let est = hitting_laplace(&spec, 2.0, rate(0.5), cfg(1.0, 20.0, 1e-2, 4000, 6)).unwrap();
    let exact = 1.0f64.sinh() / (2.0f64.sinh() / 2.0);
    assert!(
        (est.mean - exact).abs() < 4.0 * est.half_width,
        "{est:?} vs {exact}"
    );
}

#[test]
fn ratio_identity_with_a_distant_second_rate() {
    let spec = bessel3();
    let ss = derive_scale_speed(&spec).unwrap();
    let grid = GridSpec::default();
    let d = direction_for(Side::Alpha);
    let f_r = solve_excessive(&ss, rate(0.5), d, &grid).unwrap();
    let f_s = solve_excessive(&ss, rate(2.0), d, &grid).unwrap();
    let lhs = 1.0
        / row_b_from(&ss, &grid, &f_r, &f_s, Side::Alpha)
            .unwrap()
            .value;
    let sim = Simulator::new(&spec, cfg(1.0, 10.0, 1e-2, 10_000, 8)).unwrap();
    let id = ratio_identity_with(&sim, &f_r, &f_s, lhs).unwrap();
    assert!(id.agrees(4.0), "{id:?}");
}

#[test]
fn kotani_signs() {
    let b = scale_deficit(&brownian(), cfg(0.0, 1.0, 1e-3, 20_000, 10)).unwrap();
    assert!(b.contains(0.0), "{b:?}");
    let s = scale_deficit(&bessel3(), cfg(1.0, 1.0, 1e-3, 20_000, 10)).unwrap();
    assert!(s.mean < -5.0 * s.half_width, "{s:?}");
}

#[test]
fn reflection_guard_fades_with_the_step() {
    let spec = bessel3();
    let near = |dt: f64| {
        let ens = simulate(&spec, cfg(0.1, 0.2, dt, 4000, 13)).unwrap();
        ens.states
            .iter()
            .map(|p| p.iter().filter(|&&x| x < 0.02).count())
            .sum::<usize>() as f64
            / (ens.states.len() * ens.times.len()) as f64
    };
    let (coarse, fine) = (near(1e-2), near(1e-3));
    assert!(fine < coarse, "{fine} vs {coarse}");
}
