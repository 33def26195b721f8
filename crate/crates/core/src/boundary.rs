//! Feller integral tests: accessible, natural and entrance endpoints.
//!
//! For the upper endpoint and an interior reference `x`,
//!
//! ```text
//! access = int_x^beta m([x, y[) p(dy)
//! nature = int_x^beta m([y, beta[) p(dy) = int_x^beta (p(u) - p(x)) m(du)
//! ```
//!
//! (the second form by Tonelli), and mirrored for the lower endpoint. Both are
//! evaluated as partial sums over a truncation sequence approaching the
//! endpoint, with the inner integral carried cumulatively so no tail mass is
//! ever needed.

use crate::diffusion::Side;
use crate::error::{Error, Result};
use crate::grid::SideMap;
use crate::quadrature::{integrate, log_integral_exp, noise_floor, QuadOptions};
use crate::scale::ScaleSpeed;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Truncation reach toward finite and infinite endpoints (compactified distance).
pub const FINITE_GAP: f64 = 1e-10;
pub const INFINITE_GAP: f64 = 1e-4;

/// Which of the two Feller integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FellerVariant {
    Access,
    Nature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryKind {
    Accessible,
    InaccessibleNatural,
    InaccessibleEntrance,
}

impl fmt::Display for BoundaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            BoundaryKind::Accessible => "Accessible",
            BoundaryKind::InaccessibleNatural => "InaccessibleNatural",
            BoundaryKind::InaccessibleEntrance => "InaccessibleEntrance",
        })
    }
}

/// Outcome of an improper integral of a nonnegative integrand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedRealVerdict {
    #[serde(with = "crate::report::ext")]
    pub value: f64,
    pub diverged: bool,
    #[serde(with = "crate::report::ext_vec")]
    pub partial_sums: Vec<f64>,
    pub truncation_points: Vec<f64>,
}

impl ExtendedRealVerdict {
    pub fn is_finite(&self) -> bool {
        !self.diverged
    }
}

/// Divergence/convergence rules for truncated improper integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationRule {
    /// Number of truncation points after the start.
    pub points: usize,
    /// Partial sums beyond this are declared divergent.
    pub cap: f64,
    /// Increments examined by the trend tests.
    pub window: usize,
    /// Relative slack when comparing increments.
    pub slack: f64,
    /// Finite only if the extrapolated remainder is below this fraction.
    pub remainder_tol: f64,
    /// Increments shrinking by a factor above this per cell are treated as
    /// non-summable (logarithmic divergence).
    pub stall_ratio: f64,
}

impl Default for TruncationRule {
    fn default() -> Self {
        Self {
            points: 40,
            cap: 1e12,
            window: 5,
            slack: 1e-9,
            remainder_tol: 1e-3,
            stall_ratio: 0.999,
        }
    }
}

/// Largest relative rounding noise tolerated in a Feller cell.
const MAX_NOISE: f64 = 1e-1;

/// Sums `int integrand` over consecutive truncation cells and decides
/// convergence. `cell(a, b)` returns the (nonnegative) integral over the cell.
pub(crate) fn truncated_improper(
    what: &str,
    points: Vec<f64>,
    rule: &TruncationRule,
    mut cell: impl FnMut(f64, f64) -> Result<f64>,
) -> Result<ExtendedRealVerdict> {
    let mut partial = Vec::with_capacity(points.len());
    partial.push(0.0);
    let mut increments = Vec::with_capacity(points.len());
    let mut sum = 0.0;
    for w in points.windows(2) {
        let inc = cell(w[0], w[1])?;
        let inc = if inc.is_nan() {
            return Err(Error::inconclusive(
                what,
                format!("integral over [{}, {}] is NaN", w[0], w[1]),
            ));
        } else {
            inc.max(0.0)
        };
        sum += inc;
        increments.push(inc);
        partial.push(sum);
        if !sum.is_finite() || sum > rule.cap {
            return Ok(ExtendedRealVerdict {
                value: f64::INFINITY,
                diverged: true,
                partial_sums: partial,
                truncation_points: points[..increments.len() + 1].to_vec(),
            });
        }
    }
    let n = increments.len();
    let w = rule.window.min(n);
    let tail = &increments[n - w..];
    let nondecreasing = tail.windows(2).all(|p| p[1] >= p[0] * (1.0 - rule.slack));
    let stalled = tail.windows(2).all(|p| p[1] >= p[0] * rule.stall_ratio);
    if w >= 2 && (nondecreasing || stalled) && tail[w - 1] > 0.0 {
        return Ok(ExtendedRealVerdict {
            value: f64::INFINITY,
            diverged: true,
            partial_sums: partial,
            truncation_points: points,
        });
    }
    let decreasing = tail.windows(2).all(|p| p[1] < p[0]);
    let ratio = tail
        .windows(2)
        .filter(|p| p[0] > 0.0)
        .map(|p| p[1] / p[0])
        .fold(0.0_f64, f64::max);
    let last = tail.last().copied().unwrap_or(0.0);
    if last == 0.0 || (decreasing && ratio < 1.0) {
        let remainder = if last == 0.0 {
            0.0
        } else {
            last * ratio / (1.0 - ratio)
        };
        if remainder <= rule.remainder_tol * (sum + remainder) {
            return Ok(ExtendedRealVerdict {
                value: sum + remainder,
                diverged: false,
                partial_sums: partial,
                truncation_points: points,
            });
        }
    }
    Err(Error::inconclusive(
        what,
        format!(
            "partial sums neither settle nor exceed {:.0e} (last sum {sum:.6e}, last increments {:?})",
            rule.cap, tail
        ),
    ))
}

/// One of the two Feller integrals for `side`, referenced at `x_ref`.
pub fn improper_feller_integral(
    ss: &ScaleSpeed,
    x_ref: f64,
    side: Side,
    variant: FellerVariant,
) -> Result<ExtendedRealVerdict> {
    improper_feller_integral_with(
        ss,
        x_ref,
        side,
        variant,
        &TruncationRule::default(),
        FINITE_GAP,
        INFINITE_GAP,
    )
}

pub(crate) fn improper_feller_integral_with(
    ss: &ScaleSpeed,
    x_ref: f64,
    side: Side,
    variant: FellerVariant,
    rule: &TruncationRule,
    finite_gap: f64,
    infinite_gap: f64,
) -> Result<ExtendedRealVerdict> {
    let spec = ss.spec();
    if !spec.interval.contains_interior(x_ref) {
        return Err(Error::InvalidSpec(format!(
            "reference point {x_ref} is not interior"
        )));
    }
    let map = SideMap::new(&spec.interval, ss.reference_point(), side, 1.0);
    let gap = if map.is_finite() {
        finite_gap
    } else {
        infinite_gap
    };
    let points = map.truncation_points(x_ref, rule.points, gap);
    let quad = QuadOptions::default();
    let inner_quad = QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-11,
        ..quad
    };

    // Inner density and outer density, both as ln of a density in x.
    // access: inner m', outer p';  nature: inner p', outer m'.
    let log_inner = |u: f64| match variant {
        FellerVariant::Access => ss.log_speed_density(u),
        FellerVariant::Nature => ss.log_scale_density(u),
    };
    let log_outer = |u: f64| match variant {
        FellerVariant::Access => ss.log_scale_density(u),
        FellerVariant::Nature => ss.log_speed_density(u),
    };

    // ln of the inner integral from x_ref to the start of the current cell.
    // Everything is carried in log form: densities overflow near some
    // endpoints while their products stay moderate.
    let mut log_base = f64::NEG_INFINITY;
    let what = format!("{variant:?} integral at {side}");
    truncated_improper(&what, points, rule, |a, b| {
        let lb = log_base;
        let mut err: Option<Error> = None;
        let integrand = |u: f64| -> f64 {
            let parts = (|| -> Result<f64> {
                let lo = log_outer(u)?;
                let lj = log_integral_exp(log_inner, a.min(u), a.max(u), &inner_quad)?;
                Ok((lj + lo).exp())
            })();
            parts.unwrap_or_else(|e| {
                err.get_or_insert(e);
                f64::NAN
            })
        };
        let magnitude = log_inner(b)?.abs() + log_outer(b)?.abs();
        if noise_floor(magnitude) > MAX_NOISE {
            return Err(Error::inconclusive(
                &what,
                format!("log densities reach {magnitude:.3e} at {b}; beyond working precision"),
            ));
        }
        let quad = QuadOptions {
            rel_tol: quad.rel_tol.max(noise_floor(magnitude)),
            ..quad
        };
        let v = integrate(integrand, a.min(b), a.max(b), &quad);
        if let Some(e) = err {
            return Err(e);
        }
        let v = match v {
            Ok(v) => v.value,
            // Overflowing integrands only occur on the way to divergence.
            Err(Error::Quadrature { reason, .. }) if reason.contains("not finite") => f64::INFINITY,
            Err(e) => return Err(e),
        };
        // Mass carried in from earlier cells: inner(x_ref..a) * outer(a..b).
        let carried = (lb + log_integral_exp(log_outer, a.min(b), a.max(b), &inner_quad)?).exp();
        let step = log_integral_exp(log_inner, a.min(b), a.max(b), &inner_quad)?;
        log_base = log_add(log_base, step);
        Ok(v + carried)
    })
}

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// Classification of one endpoint together with both Feller integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryClass {
    pub kind: BoundaryKind,
    pub side: Side,
    pub access: ExtendedRealVerdict,
    /// Absent when the endpoint is accessible (the test is not needed).
    pub nature: Option<ExtendedRealVerdict>,
}

impl BoundaryClass {
    /// `(I_access, I_nature)`; the nature value is `NaN` when not computed.
    pub fn test_values(&self) -> (f64, f64) {
        (
            self.access.value,
            self.nature.as_ref().map_or(f64::NAN, |n| n.value),
        )
    }

    pub fn is_accessible(&self) -> bool {
        self.kind == BoundaryKind::Accessible
    }
}

pub fn classify_boundary(ss: &ScaleSpeed, side: Side, x_ref: f64) -> Result<BoundaryClass> {
    let access = improper_feller_integral(ss, x_ref, side, FellerVariant::Access)?;
    if access.is_finite() {
        return Ok(BoundaryClass {
            kind: BoundaryKind::Accessible,
            side,
            access,
            nature: None,
        });
    }
    let nature = improper_feller_integral(ss, x_ref, side, FellerVariant::Nature)?;
    let kind = if nature.diverged {
        BoundaryKind::InaccessibleNatural
    } else {
        BoundaryKind::InaccessibleEntrance
    };
    Ok(BoundaryClass {
        kind,
        side,
        access,
        nature: Some(nature),
    })
}

/// Classifies both endpoints, referenced at the diffusion's reference point.
pub fn classify_both(ss: &ScaleSpeed) -> Result<(BoundaryClass, BoundaryClass)> {
    let x0 = ss.reference_point();
    let (a, b) = rayon::join(
        || classify_boundary(ss, Side::Alpha, x0),
        || classify_boundary(ss, Side::Beta, x0),
    );
    Ok((a?, b?))
}

/// Whether `p` has a finite limit at the endpoint, and its value.
pub fn scale_limit(ss: &ScaleSpeed, side: Side) -> Result<ExtendedRealVerdict> {
    let spec = ss.spec();
    let x0 = ss.reference_point();
    let map = SideMap::new(&spec.interval, x0, side, 1.0);
    let rule = TruncationRule::default();
    let gap = if map.is_finite() {
        FINITE_GAP
    } else {
        INFINITE_GAP
    };
    let points = map.truncation_points(x0, rule.points, gap);
    let quad = QuadOptions::default();
    truncated_improper(&format!("scale limit at {side}"), points, &rule, |a, b| {
        let f = |u: f64| ss.scale_density(u).unwrap_or(f64::NAN);
        match integrate(f, a.min(b), a.max(b), &quad) {
            Ok(r) => Ok(r.value),
            Err(Error::Quadrature { reason, .. }) if reason.contains("not finite") => {
                Ok(f64::INFINITY)
            }
            Err(e) => Err(e),
        }
    })
    .map(|mut v| {
        v.value *= side.direction();
        v
    })
}
