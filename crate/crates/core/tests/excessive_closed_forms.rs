//! Excessive functions against closed forms.

use rexcess::{
    catalog_with, derive_scale_speed, solve_excessive, Direction, DiscountRate, GridSpec,
};

type Oracle = Box<dyn Fn(f64) -> f64>;

fn gbm_roots(mu: f64, sigma: f64, r: f64) -> (f64, f64) {
    // 0.5 s^2 g (g - 1) + mu g - r = 0
    let a = 0.5 * sigma * sigma;
    let b = mu - a;
    let disc = (b * b + 4.0 * a * r).sqrt();
    ((-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a))
}

fn oracles(family: &str, r: f64) -> (Vec<(&'static str, f64)>, Oracle, Oracle) {
    let k = (2.0 * r).sqrt();
    match family {
        "brownian" => (
            vec![],
            Box::new(move |x| (k * x).exp()),
            Box::new(move |x| (-k * x).exp()),
        ),
        "bessel" => (
            vec![("delta", 3.0)],
            Box::new(move |x: f64| (k * x).sinh() / (x * k.sinh())),
            Box::new(move |x: f64| (k * (1.0 - x)).exp() / x),
        ),
        "gbm" => {
            let (gp, gm) = gbm_roots(0.1, 0.3, r);
            (
                vec![("mu", 0.1), ("sigma", 0.3)],
                Box::new(move |x: f64| x.powf(gp)),
                Box::new(move |x: f64| x.powf(gm)),
            )
        }
        _ => unreachable!(),
    }
}

fn worst_error(family: &str, r: f64, direction: Direction) -> f64 {
    let (params, psi, phi) = oracles(family, r);
    let ss = derive_scale_speed(&catalog_with(family, &params).unwrap()).unwrap();
    let f = solve_excessive(
        &ss,
        DiscountRate::new(r).unwrap(),
        direction,
        &GridSpec::default(),
    )
    .unwrap();
    let exact = match direction {
        Direction::Increasing => psi,
        Direction::Decreasing => phi,
    };
    let n = f.len();
    let (lo, hi) = (n / 10, n - n / 10);
    let mut worst = 0.0f64;
    for k in lo..hi {
        let x = f.grid[k];
        let e = exact(x);
        // Midpoints exercise the interpolant as well as the nodes.
        let xm = 0.5 * (x + f.grid[k + 1]);
        let em = exact(xm);
        worst = worst
            .max((f.log_values[k].exp() / e - 1.0).abs())
            .max((f.evaluate(xm).unwrap() / em - 1.0).abs());
    }
    worst
}

#[test]
fn closed_forms_on_interior_nodes() {
    for family in ["brownian", "bessel", "gbm"] {
        for r in [0.5, 1.0] {
            for d in [Direction::Increasing, Direction::Decreasing] {
                let w = worst_error(family, r, d);
                assert!(w < 1e-6, "{family} r={r} {d}: worst relative error {w:.3e}");
            }
        }
    }
}
