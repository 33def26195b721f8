//! Shape-preserving cubic Hermite interpolation.
//!
//! Node slopes are supplied by the caller (usually exact derivatives) and are
//! limited per interval with the Fritsch-Carlson condition, so monotone data
//! yield a monotone interpolant.

/// Index `k` with `xs[k] <= x <= xs[k + 1]`, or `None` outside the hull.
pub fn bracket(xs: &[f64], x: f64) -> Option<usize> {
    let n = xs.len();
    if n < 2 || !(x >= xs[0] && x <= xs[n - 1]) {
        return None;
    }
    let k = xs.partition_point(|v| *v <= x);
    Some(k.saturating_sub(1).min(n - 2))
}

/// Fritsch-Carlson limited end slopes for one interval with secant `delta`.
pub fn limit_slopes(delta: f64, d0: f64, d1: f64) -> (f64, f64) {
    if delta == 0.0 {
        return (0.0, 0.0);
    }
    // Slopes against the secant direction would break monotonicity.
    let d0 = if d0 * delta < 0.0 { 0.0 } else { d0 };
    let d1 = if d1 * delta < 0.0 { 0.0 } else { d1 };
    let (a, b) = (d0 / delta, d1 / delta);
    let s = a * a + b * b;
    if s > 9.0 {
        let tau = 3.0 / s.sqrt();
        (tau * d0, tau * d1)
    } else {
        (d0, d1)
    }
}

/// Monotone cubic Hermite value at `x` on interval `k`.
pub fn hermite(xs: &[f64], ys: &[f64], ds: &[f64], k: usize, x: f64) -> f64 {
    let (x0, x1) = (xs[k], xs[k + 1]);
    if x == x0 {
        return ys[k];
    }
    if x == x1 {
        return ys[k + 1];
    }
    let h = x1 - x0;
    let delta = (ys[k + 1] - ys[k]) / h;
    let (d0, d1) = limit_slopes(delta, ds[k], ds[k + 1]);
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * ys[k] + h10 * h * d0 + h01 * ys[k + 1] + h11 * h * d1
}

/// Derivative of the limited Hermite interpolant.
pub fn hermite_slope(xs: &[f64], ys: &[f64], ds: &[f64], k: usize, x: f64) -> f64 {
    let (x0, x1) = (xs[k], xs[k + 1]);
    let h = x1 - x0;
    let delta = (ys[k + 1] - ys[k]) / h;
    let (d0, d1) = limit_slopes(delta, ds[k], ds[k + 1]);
    let t = (x - x0) / h;
    let t2 = t * t;
    (6.0 * t2 - 6.0 * t) * ys[k] / h
        + (3.0 * t2 - 4.0 * t + 1.0) * d0
        + (-6.0 * t2 + 6.0 * t) * ys[k + 1] / h
        + (3.0 * t2 - 2.0 * t) * d1
}
