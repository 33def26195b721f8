//! Reference values that do not depend on the library.
#![allow(dead_code)]

use rexcess::{catalog_with, DiffusionSpec};

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn catalog() -> Vec<(&'static str, DiffusionSpec)> {
    vec![
        ("brownian", catalog_with("brownian", &[]).unwrap()),
        (
            "gbm",
            catalog_with("gbm", &[("mu", 0.1), ("sigma", 0.3)]).unwrap(),
        ),
        (
            "bessel3",
            catalog_with("bessel", &[("delta", 3.0)]).unwrap(),
        ),
        (
            "cir111",
            catalog_with("cir", &[("kappa", 1.0), ("theta", 1.0), ("sigma", 1.0)]).unwrap(),
        ),
        (
            "cir112",
            catalog_with("cir", &[("kappa", 1.0), ("theta", 1.0), ("sigma", 2.0)]).unwrap(),
        ),
        ("ou", catalog_with("ou", &[("kappa", 1.0)]).unwrap()),
    ]
}

pub fn bessel3() -> DiffusionSpec {
    catalog_with("bessel", &[("delta", 3.0)]).unwrap()
}

pub fn brownian() -> DiffusionSpec {
    catalog_with("brownian", &[]).unwrap()
}

/// GBM characteristic roots of `0.5 s^2 g(g-1) + mu g - r = 0`, smaller first.
pub fn gbm_roots(mu: f64, sigma: f64, r: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let b = mu / s2 - 0.5;
    let d = (b * b + 2.0 * r / s2).sqrt();
    (-b - d, -b + d)
}

/// `E_x[e^{-rt} phi(X_t)]` for Bessel(3) with `phi(y) = e^{k(x0-y)} x0 / y`,
/// `k = sqrt(2r)`, from the killed Brownian transition density.
pub fn bessel3_phi_expectation(r: f64, x: f64, t: f64, x0: f64) -> f64 {
    let k = (2.0 * r).sqrt();
    let st = t.sqrt();
    // int_0^inf e^{-ky} [n_t(y - x) - n_t(y + x)] dy
    let a = (-k * x + 0.5 * k * k * t).exp() * normal_cdf((x - k * t) / st);
    let b = (k * x + 0.5 * k * k * t).exp() * normal_cdf((-x - k * t) / st);
    (-r * t).exp() * (k * x0).exp() * x0 * (a - b) / x
}

/// The same expectation from a Crank-Nicolson solve of `v_t = v_xx / 2 - r v`
/// for `v = x u` on `[0, length]`, with Rannacher start-up steps.
pub fn bessel3_phi_pde(r: f64, x: f64, t: f64, x0: f64, length: f64, nx: usize, nt: usize) -> f64 {
    let k = (2.0 * r).sqrt();
    let h = length / nx as f64;
    let mut v: Vec<f64> = (0..=nx)
        .map(|i| x0 * (k * (x0 - i as f64 * h)).exp())
        .collect();
    v[0] = 0.0;
    let far = |s: f64| x0 * (k * (x0 - length) + (0.5 * k * k - r) * s).exp();
    let dt_full = t / nt as f64;
    let mut steps: Vec<(f64, f64)> = (0..4).map(|_| (dt_full / 2.0, 1.0)).collect();
    steps.extend((0..nt - 2).map(|_| (dt_full, 0.5)));
    let mut time = 0.0;
    for (dt, theta) in steps {
        let lam = 0.5 * dt / (h * h);
        // (1 + theta L) v_new = (1 - (1 - theta) L) v_old with L v = -lam (v- - 2v + v+) + r dt v
        let n = nx - 1;
        let diag = 1.0 + theta * (2.0 * lam + r * dt);
        let off = -theta * lam;
        let mut rhs = vec![0.0; n];
        for i in 1..nx {
            let lv = -lam * (v[i - 1] - 2.0 * v[i] + v[i + 1]) + r * dt * v[i];
            rhs[i - 1] = v[i] - (1.0 - theta) * lv;
        }
        time += dt;
        let right = far(time);
        rhs[n - 1] -= off * right;
        // Thomas algorithm.
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = off / diag;
        d[0] = rhs[0] / diag;
        for i in 1..n {
            let m = diag - off * c[i - 1];
            c[i] = off / m;
            d[i] = (rhs[i] - off * d[i - 1]) / m;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        v[1..nx].copy_from_slice(&d);
        v[nx] = right;
    }
    let i = (x / h).floor() as usize;
    let w = x / h - i as f64;
    ((1.0 - w) * v[i] + w * v[i + 1]) / x
}

/// `E_x[1/X_t]` for Bessel(3).
pub fn bessel3_inverse_mean(x: f64, t: f64) -> f64 {
    (2.0 * normal_cdf(x / t.sqrt()) - 1.0) / x
}
