//! Martingale verdicts for the discounted excessive functions and for `p(X)`,
//! with the equivalent limit diagnostics as independent witnesses.
//!
//! For the upper endpoint (the lower one is the mirror image with `phi`):
//!
//! ```text
//! row   natural                    entrance
//! B     psi_s / psi_r  -> inf      -> ]0, inf[
//! C     psi_r / p      -> inf      -> ]0, inf[
//! D     psi_s' / psi_r' -> inf     -> ]0, inf[     (' = d+/dp)
//! E     psi_r'         -> inf      -> ]0, inf[
//! F     int psi_r dm   = inf       < inf
//! ```

use crate::boundary::{
    truncated_improper, BoundaryClass, BoundaryKind, ExtendedRealVerdict, TruncationRule,
};
use crate::diffusion::{DiffusionSpec, Side};
use crate::error::{Error, Result};
use crate::excessive::{solve_excessive, Direction, DiscountRate, ExcessiveFunction};
use crate::grid::GridSpec;
use crate::quadrature::{log_integral_exp, QuadOptions};
use crate::scale::{derive_scale_speed, ScaleSpeed};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    /// `e^{-rt} psi_r(X_t)`, stopped at the upper endpoint if it is accessible.
    PsiSideBeta,
    /// `e^{-rt} phi_r(X_t)`, stopped at the lower endpoint if it is accessible.
    PhiSideAlpha,
    /// `p(X_t)` stopped at both endpoints.
    ScaleProcess,
}

impl ProcessKind {
    pub fn for_side(side: Side) -> Self {
        match side {
            Side::Beta => ProcessKind::PsiSideBeta,
            Side::Alpha => ProcessKind::PhiSideAlpha,
        }
    }
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            ProcessKind::PsiSideBeta => "psi_side_beta",
            ProcessKind::PhiSideAlpha => "phi_side_alpha",
            ProcessKind::ScaleProcess => "scale_process",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Martingale,
    StrictLocalMartingale,
    DegenerateZero,
    Supermartingale,
    Submartingale,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Verdict::Martingale => "Martingale",
            Verdict::StrictLocalMartingale => "StrictLocalMartingale",
            Verdict::DegenerateZero => "DegenerateZero",
            Verdict::Supermartingale => "Supermartingale",
            Verdict::Submartingale => "Submartingale",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleVerdict {
    pub process: ProcessKind,
    pub verdict: Verdict,
    /// One class, or both (lower first) for the scale process.
    pub basis: Vec<BoundaryClass>,
    /// Set when the lower endpoint is absorbing and the process starts there.
    pub initial_state_note: bool,
    /// Scale process only: the supermartingale and submartingale properties.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supermartingale: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submartingale: Option<bool>,
}

/// Verdict for the discounted excessive function recessive away from `side`.
pub fn verdict_from_boundary(
    bc: &BoundaryClass,
    side: Side,
    alpha_absorbing_and_started_there: bool,
) -> MartingaleVerdict {
    debug_assert_eq!(bc.side, side);
    let verdict = if alpha_absorbing_and_started_there {
        Verdict::DegenerateZero
    } else {
        match bc.kind {
            BoundaryKind::Accessible | BoundaryKind::InaccessibleNatural => Verdict::Martingale,
            BoundaryKind::InaccessibleEntrance => Verdict::StrictLocalMartingale,
        }
    };
    MartingaleVerdict {
        process: ProcessKind::for_side(side),
        verdict,
        basis: vec![bc.clone()],
        initial_state_note: alpha_absorbing_and_started_there,
        supermartingale: None,
        submartingale: None,
    }
}

/// `p(X)` is a martingale iff neither endpoint is an entrance; it is a
/// supermartingale iff the lower one is not, a submartingale iff the upper one is not.
pub fn kotani_verdict(bc_alpha: &BoundaryClass, bc_beta: &BoundaryClass) -> MartingaleVerdict {
    let sup = bc_alpha.kind != BoundaryKind::InaccessibleEntrance;
    let sub = bc_beta.kind != BoundaryKind::InaccessibleEntrance;
    let verdict = match (sup, sub) {
        (true, true) => Verdict::Martingale,
        (true, false) => Verdict::Supermartingale,
        (false, true) => Verdict::Submartingale,
        (false, false) => Verdict::StrictLocalMartingale,
    };
    MartingaleVerdict {
        process: ProcessKind::ScaleProcess,
        verdict,
        basis: vec![bc_alpha.clone(), bc_beta.clone()],
        initial_state_note: false,
        supermartingale: Some(sup),
        submartingale: Some(sub),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    DivergesToInfinity,
    FinitePositive,
    Zero,
    Inconclusive,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Regime::DivergesToInfinity => "DivergesToInfinity",
            Regime::FinitePositive => "FinitePositive",
            Regime::Zero => "Zero",
            Regime::Inconclusive => "Inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    #[serde(with = "crate::report::ext")]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    #[serde(with = "crate::report::ext")]
    pub value: f64,
    pub regime: Regime,
    /// Samples approaching the endpoint, nearest last.
    pub samples: Vec<Sample>,
}

/// Tail extrapolation rule. Decisions use `ln q` against `ln(1/d)`, with `d`
/// the compactified distance to the endpoint, so they are unaffected by
/// positive rescaling of `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitRule {
    /// Samples nearest the endpoint that are examined.
    pub window: usize,
    /// Largest relative spread of a settled tail.
    pub fluctuation: f64,
    /// Smallest log-log slope counted as growth or decay.
    pub min_slope: f64,
}

impl Default for LimitRule {
    fn default() -> Self {
        Self {
            window: 12,
            fluctuation: 1e-4,
            min_slope: 0.02,
        }
    }
}

/// Classifies the limit of `q` from `ln q` sampled at points with distances `d`
/// (both ordered toward the endpoint).
pub fn estimate_limit(
    xs: &[f64],
    distances: &[f64],
    log_q: &[f64],
    rule: &LimitRule,
) -> LimitEstimate {
    let n = xs.len();
    let w = rule.window.min(n);
    let (xs, ds, ls) = (&xs[n - w..], &distances[n - w..], &log_q[n - w..]);
    let samples = xs
        .iter()
        .zip(ls)
        .map(|(&x, &l)| Sample { x, value: l.exp() })
        .collect();
    let inconclusive = |samples| LimitEstimate {
        value: f64::NAN,
        regime: Regime::Inconclusive,
        samples,
    };
    if w < 3 || ls.iter().any(|l| l.is_nan()) {
        return inconclusive(samples);
    }
    let last = ls[w - 1];
    let spread = ls.iter().fold(0.0f64, |m, l| m.max((l - last).abs()));
    if last.is_finite() && spread < rule.fluctuation {
        return LimitEstimate {
            value: last.exp(),
            regime: Regime::FinitePositive,
            samples,
        };
    }
    if last == f64::INFINITY {
        return LimitEstimate {
            value: f64::INFINITY,
            regime: Regime::DivergesToInfinity,
            samples,
        };
    }
    let slopes: Vec<f64> = (0..w - 1)
        .map(|i| (ls[i + 1] - ls[i]) / (ds[i] / ds[i + 1]).ln())
        .collect();
    let (first, end) = (slopes[0], slopes[w - 2]);
    if slopes.iter().all(|&s| s > 0.0) && end >= rule.min_slope && end >= 0.5 * first {
        return LimitEstimate {
            value: f64::INFINITY,
            regime: Regime::DivergesToInfinity,
            samples,
        };
    }
    if slopes.iter().all(|&s| s < 0.0) && -end >= rule.min_slope && -end >= -0.5 * first {
        return LimitEstimate {
            value: 0.0,
            regime: Regime::Zero,
            samples,
        };
    }
    inconclusive(samples)
}

/// The excessive function relevant at `side`: psi at the upper endpoint, phi at the lower.
pub fn direction_for(side: Side) -> Direction {
    match side {
        Side::Beta => Direction::Increasing,
        Side::Alpha => Direction::Decreasing,
    }
}

struct Tail {
    idx: Vec<usize>,
    xs: Vec<f64>,
    ds: Vec<f64>,
}

fn tail(f: &ExcessiveFunction, ss: &ScaleSpeed, grid: &GridSpec, side: Side) -> Tail {
    let spec = ss.spec();
    let map = grid.side_map(&spec.interval, spec.reference_point, side);
    let idx = f.indices_toward(side);
    let xs: Vec<f64> = idx.iter().map(|&k| f.grid[k]).collect();
    let ds = xs.iter().map(|&x| map.distance(x)).collect();
    Tail { idx, xs, ds }
}

fn check_side(f: &ExcessiveFunction, side: Side) -> Result<()> {
    if f.direction != direction_for(side) {
        return Err(Error::Config(format!(
            "the {} endpoint needs the {} solution, got {}",
            side,
            direction_for(side),
            f.direction
        )));
    }
    Ok(())
}

/// Row B from solved functions: `f_s / f_r` toward `side`.
pub fn row_b_from(
    ss: &ScaleSpeed,
    grid: &GridSpec,
    f_r: &ExcessiveFunction,
    f_s: &ExcessiveFunction,
    side: Side,
) -> Result<LimitEstimate> {
    check_side(f_r, side)?;
    check_side(f_s, side)?;
    let t = tail(f_r, ss, grid, side);
    let lq: Vec<f64> = t
        .idx
        .iter()
        .map(|&k| f_s.log_values[k] - f_r.log_values[k])
        .collect();
    Ok(estimate_limit(&t.xs, &t.ds, &lq, &LimitRule::default()))
}

/// Row C from a solved function: `f_r / |p(endpoint) - p|` (or `/ |p|` when `p(endpoint)` is infinite).
pub fn row_c_from(
    ss: &ScaleSpeed,
    grid: &GridSpec,
    f_r: &ExcessiveFunction,
    side: Side,
    p_end_finite: bool,
) -> Result<LimitEstimate> {
    check_side(f_r, side)?;
    let t = tail(f_r, ss, grid, side);
    let w = LimitRule::default().window.min(t.idx.len());
    let start = t.idx.len() - w;
    let mut lq = vec![f64::NAN; t.idx.len()];
    for j in start..t.idx.len() {
        let k = t.idx[j];
        let x = t.xs[j];
        let den = log_scale_gap(ss, x, side, p_end_finite)?;
        lq[j] = f_r.log_values[k] - den;
    }
    Ok(estimate_limit(&t.xs, &t.ds, &lq, &LimitRule::default()))
}

/// `ln |p(endpoint) - p(x)|` or `ln |p(x)|`, computed without forming `p'` directly.
pub fn log_scale_gap(ss: &ScaleSpeed, x: f64, side: Side, p_end_finite: bool) -> Result<f64> {
    let quad = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-12,
        ..QuadOptions::default()
    };
    let (lo, hi) = if p_end_finite {
        let end = ss.spec().interval.endpoint(side);
        if side == Side::Beta {
            (x, end)
        } else {
            (end, x)
        }
    } else {
        let x0 = ss.reference_point();
        (x0.min(x), x0.max(x))
    };
    if lo.is_finite() && hi.is_finite() {
        return log_integral_exp(|u| ss.log_scale_density(u), lo, hi, &quad);
    }
    // Tail to an infinite endpoint, through u = x + t / (1 - t).
    let (from, dir) = if hi.is_finite() {
        (hi, -1.0)
    } else {
        (lo, 1.0)
    };
    log_integral_exp(
        |t| {
            let u = from + dir * t / (1.0 - t);
            Ok(ss.log_scale_density(u)? - 2.0 * (1.0 - t).ln())
        },
        0.0,
        1.0 - 1e-12,
        &quad,
    )
}

/// Row D from solved functions: ratio of scale derivatives toward `side`.
pub fn row_d_from(
    ss: &ScaleSpeed,
    grid: &GridSpec,
    f_r: &ExcessiveFunction,
    f_s: &ExcessiveFunction,
    side: Side,
) -> Result<LimitEstimate> {
    check_side(f_r, side)?;
    check_side(f_s, side)?;
    let t = tail(f_r, ss, grid, side);
    let lq: Vec<f64> = t
        .idx
        .iter()
        .map(|&k| f_s.log_abs_derivative[k] - f_r.log_abs_derivative[k])
        .collect();
    Ok(estimate_limit(&t.xs, &t.ds, &lq, &LimitRule::default()))
}

/// Row E from a solved function: `|d+f/dp|` toward `side`.
pub fn row_e_from(
    ss: &ScaleSpeed,
    grid: &GridSpec,
    f_r: &ExcessiveFunction,
    side: Side,
) -> Result<LimitEstimate> {
    check_side(f_r, side)?;
    let t = tail(f_r, ss, grid, side);
    let lq: Vec<f64> = t.idx.iter().map(|&k| f_r.log_abs_derivative[k]).collect();
    Ok(estimate_limit(&t.xs, &t.ds, &lq, &LimitRule::default()))
}

/// Row F from a solved function: `int_{[x_ref, endpoint[} f_r dm`, truncated to the grid hull.
pub fn row_f_from(
    ss: &ScaleSpeed,
    grid: &GridSpec,
    f_r: &ExcessiveFunction,
    side: Side,
    x_ref: f64,
) -> Result<ExtendedRealVerdict> {
    check_side(f_r, side)?;
    let spec = ss.spec();
    let map = grid.side_map(&spec.interval, spec.reference_point, side);
    let rule = TruncationRule::default();
    let (lo, hi) = f_r.hull();
    let edge = if side == Side::Beta { hi } else { lo };
    let points = map.truncation_points(
        x_ref,
        rule.points,
        map.distance(edge).min(map.distance(x_ref)),
    );
    let quad = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-10,
        ..QuadOptions::default()
    };
    let what = format!("integral of the excessive function against the speed measure at {side}");
    truncated_improper(&what, points, &rule, |a, b| {
        let (a, b) = (a.min(b), a.max(b));
        let log_integrand =
            |u: f64| -> Result<f64> { Ok(f_r.log_evaluate(u)? + ss.log_speed_density(u)?) };
        Ok(log_integral_exp(log_integrand, a, b, &quad)?.exp())
    })
}

/// The regime every row should show for an inaccessible endpoint of this kind.
pub fn expected_regime(kind: BoundaryKind) -> Option<Regime> {
    match kind {
        BoundaryKind::InaccessibleNatural => Some(Regime::DivergesToInfinity),
        BoundaryKind::InaccessibleEntrance => Some(Regime::FinitePositive),
        BoundaryKind::Accessible => None,
    }
}

fn solve(
    ss: &ScaleSpeed,
    rate: DiscountRate,
    side: Side,
    grid: &GridSpec,
) -> Result<ExcessiveFunction> {
    solve_excessive(ss, rate, direction_for(side), grid)
}

fn p_end_finite(ss: &ScaleSpeed, side: Side) -> Result<bool> {
    Ok(crate::boundary::scale_limit(ss, side)?.is_finite())
}

/// Row B: `lim psi_s / psi_r` at `side` (phi at the lower endpoint).
pub fn row_b(
    ss: &ScaleSpeed,
    r: DiscountRate,
    s: DiscountRate,
    side: Side,
) -> Result<LimitEstimate> {
    let grid = GridSpec::default();
    row_b_from(
        ss,
        &grid,
        &solve(ss, r, side, &grid)?,
        &solve(ss, s, side, &grid)?,
        side,
    )
}

/// Row C: `lim psi_r / p` with the affine convention for finite `p(endpoint)`.
pub fn row_c(ss: &ScaleSpeed, r: DiscountRate, side: Side) -> Result<LimitEstimate> {
    let grid = GridSpec::default();
    row_c_from(
        ss,
        &grid,
        &solve(ss, r, side, &grid)?,
        side,
        p_end_finite(ss, side)?,
    )
}

/// Row D: `lim (d+psi_s/dp) / (d+psi_r/dp)`.
pub fn row_d(
    ss: &ScaleSpeed,
    r: DiscountRate,
    s: DiscountRate,
    side: Side,
) -> Result<LimitEstimate> {
    let grid = GridSpec::default();
    row_d_from(
        ss,
        &grid,
        &solve(ss, r, side, &grid)?,
        &solve(ss, s, side, &grid)?,
        side,
    )
}

/// Row E: `lim |d+psi_r/dp|`.
pub fn row_e(ss: &ScaleSpeed, r: DiscountRate, side: Side) -> Result<LimitEstimate> {
    let grid = GridSpec::default();
    row_e_from(ss, &grid, &solve(ss, r, side, &grid)?, side)
}

/// Row F: `int_{[x_ref, endpoint[} psi_r dm`.
pub fn row_f(
    ss: &ScaleSpeed,
    r: DiscountRate,
    side: Side,
    x_ref: f64,
) -> Result<ExtendedRealVerdict> {
    let grid = GridSpec::default();
    row_f_from(ss, &grid, &solve(ss, r, side, &grid)?, side, x_ref)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Row {
    B,
    C,
    D,
    E,
    F,
}

impl fmt::Display for Row {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&format!("{:?}", self))
    }
}

/// One row of the diagnostic table at one endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowWitness {
    pub row: Row,
    pub r: DiscountRate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<DiscountRate>,
    pub regime: Regime,
    #[serde(with = "crate::report::ext")]
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integral: Option<ExtendedRealVerdict>,
}

impl RowWitness {
    fn from_limit(row: Row, r: DiscountRate, s: Option<DiscountRate>, est: LimitEstimate) -> Self {
        Self {
            row,
            r,
            s,
            regime: est.regime,
            value: est.value,
            limit: Some(est),
            integral: None,
        }
    }

    fn from_integral(r: DiscountRate, v: ExtendedRealVerdict) -> Self {
        Self {
            row: Row::F,
            r,
            s: None,
            regime: if v.diverged {
                Regime::DivergesToInfinity
            } else {
                Regime::FinitePositive
            },
            value: v.value,
            limit: None,
            integral: Some(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideReport {
    pub side: Side,
    pub class: BoundaryClass,
    pub verdict: MartingaleVerdict,
    /// Empty at accessible endpoints, where the table does not apply.
    pub rows: Vec<RowWitness>,
    /// `None` at accessible endpoints.
    pub concordant: Option<bool>,
    pub discordant_rows: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullReport {
    pub diffusion: String,
    pub rates: Vec<DiscountRate>,
    pub alpha: SideReport,
    pub beta: SideReport,
    pub scale_process: MartingaleVerdict,
}

/// Classification, solves, all rows at both endpoints and the verdicts.
pub fn full_report(spec: &DiffusionSpec, rates: &[DiscountRate]) -> Result<FullReport> {
    full_report_with(spec, rates, &GridSpec::default())
}

pub fn full_report_with(
    spec: &DiffusionSpec,
    rates: &[DiscountRate],
    grid: &GridSpec,
) -> Result<FullReport> {
    if rates.is_empty() {
        return Err(Error::Config(
            "at least one discount rate is required".into(),
        ));
    }
    let mut rates = rates.to_vec();
    rates.sort_by(|a, b| a.value().total_cmp(&b.value()));
    if rates.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("discount rates must be distinct".into()));
    }
    let ss = derive_scale_speed(spec)?;
    let (ca, cb) = crate::boundary::classify_both(&ss)?;
    let (alpha, beta) = rayon::join(
        || side_report(&ss, grid, &rates, ca.clone()),
        || side_report(&ss, grid, &rates, cb.clone()),
    );
    Ok(FullReport {
        diffusion: spec.label(),
        rates,
        alpha: alpha?,
        beta: beta?,
        scale_process: kotani_verdict(&ca, &cb),
    })
}

fn side_report(
    ss: &ScaleSpeed,
    grid: &GridSpec,
    rates: &[DiscountRate],
    class: BoundaryClass,
) -> Result<SideReport> {
    let side = class.side;
    let verdict = verdict_from_boundary(&class, side, false);
    let Some(expected) = expected_regime(class.kind) else {
        return Ok(SideReport {
            side,
            class,
            verdict,
            rows: Vec::new(),
            concordant: None,
            discordant_rows: Vec::new(),
        });
    };
    let p_finite = p_end_finite(ss, side)?;
    let solved: Vec<ExcessiveFunction> = rates
        .par_iter()
        .map(|&r| solve(ss, r, side, grid))
        .collect::<Result<_>>()?;
    let x_ref = ss.reference_point();
    let mut rows = Vec::new();
    for (i, f_r) in solved.iter().enumerate() {
        let r = rates[i];
        for (j, f_s) in solved.iter().enumerate().skip(i + 1) {
            rows.push(RowWitness::from_limit(
                Row::B,
                r,
                Some(rates[j]),
                row_b_from(ss, grid, f_r, f_s, side)?,
            ));
        }
        rows.push(RowWitness::from_limit(
            Row::C,
            r,
            None,
            row_c_from(ss, grid, f_r, side, p_finite)?,
        ));
        for (j, f_s) in solved.iter().enumerate().skip(i + 1) {
            rows.push(RowWitness::from_limit(
                Row::D,
                r,
                Some(rates[j]),
                row_d_from(ss, grid, f_r, f_s, side)?,
            ));
        }
        rows.push(RowWitness::from_limit(
            Row::E,
            r,
            None,
            row_e_from(ss, grid, f_r, side)?,
        ));
        rows.push(RowWitness::from_integral(
            r,
            row_f_from(ss, grid, f_r, side, x_ref)?,
        ));
    }
    rows.sort_by_key(|w| w.row as u8);
    if let Some(bad) = rows.iter().find(|w| w.regime == Regime::Inconclusive) {
        return Err(Error::inconclusive(
            format!("row {} at {side} (r = {})", bad.row, bad.r),
            "the sampled tail neither settles nor grows or decays monotonically",
        ));
    }
    let discordant_rows: Vec<String> = rows
        .iter()
        .filter(|w| w.regime != expected)
        .map(|w| match w.s {
            Some(s) => format!("{} (r = {}, s = {s}): {}", w.row, w.r, w.regime),
            None => format!("{} (r = {}): {}", w.row, w.r, w.regime),
        })
        .collect();
    Ok(SideReport {
        side,
        class,
        verdict,
        rows,
        concordant: Some(discordant_rows.is_empty()),
        discordant_rows,
    })
}
