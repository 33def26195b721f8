//! The increasing and decreasing r-excessive functions.
//!
//! Both solve `d/dm (d+f/dp) = r f`, i.e. the Volterra identity
//!
//! ```text
//! f(x)      = f(a) + (d+f/dp)(a) (p(x) - p(a)) + r int_a^x (p(x) - p(y)) f(y) m(dy)
//! d+f/dp(x) = d+f/dp(a) + r int_a^x f(y) m(dy)
//! ```
//!
//! The increasing solution is the limit of solutions vanishing at a start
//! point `a` as `a` approaches the lower endpoint (and symmetrically for the
//! decreasing one). Solutions are marched cell by cell; on each cell the
//! identity is solved by Picard iteration on Chebyshev-Lobatto nodes, with the
//! cell halved whenever the sweeps fail to contract or the nodes under-resolve
//! the integrands. Values and derivatives are stored as logarithms.

use crate::boundary::log_add;
use crate::diffusion::Side;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, SideMap};
use crate::interp;
use crate::scale::ScaleSpeed;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::sync::OnceLock;

/// A strictly positive discount rate.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct DiscountRate(f64);

impl DiscountRate {
    pub fn new(r: f64) -> Result<Self> {
        if r.is_finite() && r > 0.0 {
            Ok(Self(r))
        } else {
            Err(Error::Config(format!(
                "discount rate must be finite and > 0, got {r}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for DiscountRate {
    type Error = Error;
    fn try_from(r: f64) -> Result<Self> {
        Self::new(r)
    }
}

impl From<DiscountRate> for f64 {
    fn from(r: DiscountRate) -> f64 {
        r.0
    }
}

impl fmt::Display for DiscountRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// psi_r, recessive at the lower endpoint.
    Increasing,
    /// phi_r, recessive at the upper endpoint.
    Decreasing,
}

impl Direction {
    /// The endpoint where this solution is recessive and the march starts.
    pub fn start_side(self) -> Side {
        match self {
            Direction::Increasing => Side::Alpha,
            Direction::Decreasing => Side::Beta,
        }
    }

    /// The endpoint the local martingale is stopped at.
    pub fn far_side(self) -> Side {
        self.start_side().other()
    }

    pub fn sign(self) -> f64 {
        match self {
            Direction::Increasing => 1.0,
            Direction::Decreasing => -1.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Direction::Increasing => "increasing",
            Direction::Decreasing => "decreasing",
        })
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "increasing" | "psi" => Ok(Direction::Increasing),
            "decreasing" | "phi" => Ok(Direction::Decreasing),
            other => Err(Error::Config(format!("unknown direction `{other}`"))),
        }
    }
}

/// Solver knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub grid: GridSpec,
    /// Relative sup-norm change at which Picard sweeps stop.
    pub picard_tol: f64,
    pub max_sweeps: usize,
    /// Relative change of the start state below which the limit `a -> endpoint` is accepted.
    pub start_tol: f64,
    pub max_start_refinements: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            picard_tol: 1e-13,
            max_sweeps: 200,
            start_tol: 1e-12,
            max_start_refinements: 16,
        }
    }
}

/// psi_r or phi_r tabulated on a grid, normalised to 1 at the reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcessiveFunction {
    pub direction: Direction,
    pub rate: DiscountRate,
    pub grid: Vec<f64>,
    /// `ln f` at the grid nodes.
    pub log_values: Vec<f64>,
    /// `ln |d+f/dp|` at the grid nodes; the sign is `direction.sign()`.
    pub log_abs_derivative: Vec<f64>,
    pub log_scale_density: Vec<f64>,
    pub log_speed_density: Vec<f64>,
    /// `p` at the grid nodes (may be infinite where `p'` overflows).
    pub scale: Vec<f64>,
    pub normalization_point: f64,
    pub normalization_index: usize,
    /// `ln f` just beyond the last grid node toward the far endpoint.
    pub far_edge_log_value: f64,
    pub far_edge_point: f64,
    /// Relative change of the start state between the last two start points.
    pub start_contamination: f64,
    /// `ln |d+f/dp(x_{k+1}) - d+f/dp(x_k)|`, accumulated by the solver itself.
    pub log_abs_increment: Vec<f64>,
    fine: Table,
}

/// Solves for psi_r (increasing) or phi_r (decreasing).
pub fn solve_excessive(
    ss: &ScaleSpeed,
    rate: DiscountRate,
    direction: Direction,
    grid: &GridSpec,
) -> Result<ExcessiveFunction> {
    let opts = SolverOptions {
        grid: *grid,
        ..SolverOptions::default()
    };
    solve_excessive_with(ss, rate, direction, &opts)
}

pub fn solve_excessive_with(
    ss: &ScaleSpeed,
    rate: DiscountRate,
    direction: Direction,
    opts: &SolverOptions,
) -> Result<ExcessiveFunction> {
    let spec = ss.spec();
    let x0 = spec.reference_point;
    let grid = opts.grid.build(&spec.interval, x0);
    let norm_index = grid
        .iter()
        .position(|&x| x == x0)
        .ok_or_else(|| Error::InvalidSpec("grid does not contain the reference point".into()))?;
    let n = grid.len();

    let marcher = Marcher {
        ss,
        r: rate.value(),
        opts,
    };
    let start_side = direction.start_side();
    let start_map = opts.grid.side_map(&spec.interval, x0, start_side);
    // Grid nodes in marching order.
    let order: Vec<usize> = match direction {
        Direction::Increasing => (0..n).collect(),
        Direction::Decreasing => (0..n).rev().collect(),
    };
    let first = grid[order[0]];

    // Limit of solutions vanishing at a -> start endpoint.
    let d_first = start_map.distance(first);
    // Infinite endpoints: the factor is squared each round, so rapidly
    // separating solutions stop early and power laws still get far enough.
    let mut shrink: f64 = if start_map.is_finite() { 1e-4 } else { 0.8 };
    let mut d_start = d_first;
    let mut best: Option<State> = None;
    let mut contamination = f64::INFINITY;
    let mut prev_x = first;
    for _ in 0..opts.max_start_refinements {
        d_start *= shrink;
        if !start_map.is_finite() {
            shrink *= shrink;
        }
        let a = start_map.point(d_start);
        if !spec.interval.contains_interior(a) || a == prev_x {
            break;
        }
        prev_x = a;
        let init = State::vanishing_at(a, direction.sign());
        let h0 = initial_step(&start_map, a, first);
        let (state, _, _) = marcher.march(init, first, h0)?;
        if let Some(prev) = &best {
            let (q0, q1) = (prev.log_slope_ratio(), state.log_slope_ratio());
            contamination = ((q1 - q0).abs() / q1.abs().max(1e-300)).min(f64::MAX);
            best = Some(state);
            if contamination <= opts.start_tol {
                break;
            }
        } else {
            best = Some(state);
        }
    }
    let mut state = best
        .ok_or_else(|| Error::NonConvergence("no interior start point near the endpoint".into()))?;

    // March through the grid, recording a finer table for interpolation.
    let mut fine = Table::with_capacity(SUBDIVISIONS * n);
    let mut log_abs_increment = vec![0.0; n - 1];
    let mut h = (grid[order[1]] - first).abs();
    let record = |state: &State, fine: &mut Table| -> Result<()> {
        let lp = ss.log_scale_density(state.x)?;
        let (lf, lg) = state.logs(lp);
        if !(lf.is_finite() && lg.is_finite()) || state.f <= 0.0 {
            return Err(Error::Overflow { at: state.x });
        }
        fine.push(
            state.x,
            lf,
            lg,
            lp,
            LN_2 - 2.0 * spec.volatility_at(state.x).ln() - lp,
        );
        Ok(())
    };
    record(&state, &mut fine)?;
    for w in order.windows(2) {
        let (from, to) = (grid[w[0]], grid[w[1]]);
        let mut log_dg = f64::NEG_INFINITY;
        for j in 1..=SUBDIVISIONS {
            let target = if j == SUBDIVISIONS {
                to
            } else {
                from + (to - from) * (j as f64 / SUBDIVISIONS as f64)
            };
            let (s, h_next, dg) = marcher.march(state, target, h)?;
            state = s;
            h = h_next;
            log_dg = log_add(log_dg, dg);
            record(&state, &mut fine)?;
        }
        log_abs_increment[w[0].min(w[1])] = log_dg;
    }
    if direction == Direction::Decreasing {
        fine.reverse();
    }

    // Continue a little toward the far endpoint for the boundary value.
    let far_map = opts.grid.side_map(&spec.interval, x0, direction.far_side());
    let last = grid[*order.last().unwrap()];
    let far_shrink = if far_map.is_finite() { 1e-3 } else { 0.5 };
    let far_point = far_map.point(far_map.distance(last) * far_shrink);
    let far_edge_log = if spec.interval.contains_interior(far_point) && far_point != last {
        match marcher.march(state, far_point, h) {
            Ok((s, _, _)) => s.logs(ss.log_scale_density(far_point)?).0,
            Err(Error::Overflow { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        }
    } else {
        fine.log_values[if direction == Direction::Increasing {
            fine.len() - 1
        } else {
            0
        }]
    };

    let shift = fine.log_values[SUBDIVISIONS * norm_index];
    for v in fine
        .log_values
        .iter_mut()
        .chain(fine.log_abs_derivative.iter_mut())
        .chain(log_abs_increment.iter_mut())
    {
        *v -= shift;
    }
    fine.log_values[SUBDIVISIONS * norm_index] = 0.0;
    let pick = |v: &[f64]| -> Vec<f64> { v.iter().step_by(SUBDIVISIONS).copied().collect() };
    let scale = grid
        .iter()
        .map(|&x| ss.scale(x).unwrap_or(f64::NAN))
        .collect();
    Ok(ExcessiveFunction {
        direction,
        rate,
        log_values: pick(&fine.log_values),
        log_abs_derivative: pick(&fine.log_abs_derivative),
        log_scale_density: pick(&fine.log_scale_density),
        log_speed_density: pick(&fine.log_speed_density),
        log_abs_increment,
        grid,
        scale,
        normalization_point: x0,
        normalization_index: norm_index,
        far_edge_log_value: far_edge_log - shift,
        far_edge_point: far_point,
        start_contamination: contamination,
        fine,
    })
}

/// Sub-intervals per grid interval in the interpolation table.
const SUBDIVISIONS: usize = 4;

/// Solution data at the nodes used for interpolation.
#[derive(Debug, Clone, PartialEq, Default)]
struct Table {
    x: Vec<f64>,
    log_values: Vec<f64>,
    log_abs_derivative: Vec<f64>,
    log_scale_density: Vec<f64>,
    log_speed_density: Vec<f64>,
}

impl Table {
    fn with_capacity(n: usize) -> Self {
        Self {
            x: Vec::with_capacity(n),
            log_values: Vec::with_capacity(n),
            log_abs_derivative: Vec::with_capacity(n),
            log_scale_density: Vec::with_capacity(n),
            log_speed_density: Vec::with_capacity(n),
        }
    }

    fn len(&self) -> usize {
        self.x.len()
    }

    fn push(&mut self, x: f64, lf: f64, lg: f64, lp: f64, lm: f64) {
        self.x.push(x);
        self.log_values.push(lf);
        self.log_abs_derivative.push(lg);
        self.log_scale_density.push(lp);
        self.log_speed_density.push(lm);
    }

    /// `d ln f / dx` at node `k`.
    fn log_value_slope(&self, direction: Direction, k: usize) -> f64 {
        direction.sign()
            * (self.log_abs_derivative[k] - self.log_values[k] + self.log_scale_density[k]).exp()
    }

    /// `d ln |g| / dx` at node `k`, with `g = d+f/dp` and `g' = r f m'`.
    fn log_derivative_slope(&self, direction: Direction, r: f64, k: usize) -> f64 {
        direction.sign()
            * r
            * (self.log_values[k] + self.log_speed_density[k] - self.log_abs_derivative[k]).exp()
    }

    fn reverse(&mut self) {
        self.x.reverse();
        self.log_values.reverse();
        self.log_abs_derivative.reverse();
        self.log_scale_density.reverse();
        self.log_speed_density.reverse();
    }
}

fn initial_step(map: &SideMap, a: f64, target: f64) -> f64 {
    let span = (target - a).abs();
    if map.is_finite() {
        (0.5 * (a - map.endpoint).abs()).min(span)
    } else {
        span.min(0.5)
    }
}

/// `f = f_s e^lambda`, `df/dx = dfdx_s e^lambda` at `x`.
#[derive(Debug, Clone, Copy)]
struct State {
    x: f64,
    f: f64,
    dfdx: f64,
    log_scale: f64,
}

impl State {
    fn vanishing_at(a: f64, sign: f64) -> Self {
        Self {
            x: a,
            f: 0.0,
            dfdx: sign,
            log_scale: 0.0,
        }
    }

    /// `(ln f, ln |d+f/dp|)` given `ln p'(x)`.
    fn logs(&self, log_pd: f64) -> (f64, f64) {
        (
            self.log_scale + self.f.ln(),
            self.log_scale + self.dfdx.abs().ln() - log_pd,
        )
    }

    /// `(df/dx) / f`, independent of the scaling.
    fn log_slope_ratio(&self) -> f64 {
        self.dfdx / self.f
    }

    fn renormalize(&mut self) {
        let c = self.f.abs().max(self.dfdx.abs());
        if c > 0.0 && c.is_finite() {
            self.f /= c;
            self.dfdx /= c;
            self.log_scale += c.ln();
        }
    }
}

const CHEB_N: usize = 16;

struct Cheb {
    /// Lobatto nodes on [-1, 1], increasing.
    nodes: [f64; CHEB_N + 1],
    /// `(S v)_i = int_{-1}^{y_i}` of the interpolant of `v`.
    integ: [[f64; CHEB_N + 1]; CHEB_N + 1],
}

fn cheb() -> &'static Cheb {
    static CHEB: OnceLock<Cheb> = OnceLock::new();
    CHEB.get_or_init(|| {
        let n = CHEB_N;
        let theta = |j: usize| PI * (n - j) as f64 / n as f64;
        let mut nodes = [0.0; CHEB_N + 1];
        for (j, y) in nodes.iter_mut().enumerate() {
            *y = theta(j).cos();
        }
        nodes[0] = -1.0;
        nodes[n] = 1.0;
        let mut integ = [[0.0; CHEB_N + 1]; CHEB_N + 1];
        for m in 0..=n {
            let c = cheb_coeffs_unit(m);
            let mut b = [0.0; CHEB_N + 2];
            let cc = |k: usize| if k <= n { c[k] } else { 0.0 };
            b[1] = cc(0) - 0.5 * cc(2);
            for k in 2..=n + 1 {
                b[k] = (cc(k - 1) - cc(k + 1)) / (2.0 * k as f64);
            }
            let at_minus_one: f64 = (1..=n + 1)
                .map(|k| if k % 2 == 0 { b[k] } else { -b[k] })
                .sum();
            for i in 0..=n {
                let th = theta(i);
                let v: f64 = (1..=n + 1).map(|k| b[k] * (k as f64 * th).cos()).sum();
                integ[i][m] = v - at_minus_one;
            }
        }
        Cheb { nodes, integ }
    })
}

/// Chebyshev coefficients of the interpolant of the unit vector `e_m`.
fn cheb_coeffs_unit(m: usize) -> [f64; CHEB_N + 1] {
    let mut v = [0.0; CHEB_N + 1];
    v[m] = 1.0;
    cheb_coeffs(&v)
}

fn cheb_coeffs(v: &[f64; CHEB_N + 1]) -> [f64; CHEB_N + 1] {
    let n = CHEB_N;
    let mut c = [0.0; CHEB_N + 1];
    for (k, ck) in c.iter_mut().enumerate() {
        let mut s = 0.0;
        for (j, vj) in v.iter().enumerate() {
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            let th = PI * (n - j) as f64 / n as f64;
            s += w * vj * (k as f64 * th).cos();
        }
        *ck = 2.0 * s / n as f64;
    }
    c[0] *= 0.5;
    c[n] *= 0.5;
    c
}

fn tail_ratio(v: &[f64; CHEB_N + 1]) -> f64 {
    let c = cheb_coeffs(v);
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    (c[CHEB_N].abs() + c[CHEB_N - 1].abs()) / scale
}

fn apply(s: &[[f64; CHEB_N + 1]; CHEB_N + 1], v: &[f64; CHEB_N + 1], out: &mut [f64; CHEB_N + 1]) {
    for (o, row) in out.iter_mut().zip(s.iter()) {
        *o = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
    }
}

struct Marcher<'a> {
    ss: &'a ScaleSpeed,
    r: f64,
    opts: &'a SolverOptions,
}

enum CellOutcome {
    Done {
        state: State,
        sweeps: usize,
        log_dg: f64,
    },
    Split,
}

impl Marcher<'_> {
    /// Marches `state` to `target`; returns the new state, a suggested next
    /// step and `ln |change of d+f/dp|`.
    fn march(&self, mut state: State, target: f64, mut h: f64) -> Result<(State, f64, f64)> {
        let mut log_dg = f64::NEG_INFINITY;
        let dir = (target - state.x).signum();
        let mut log_pd = self.ss.log_scale_density(state.x)?;
        while state.x != target {
            let remaining = (target - state.x).abs();
            let step = h.min(remaining);
            let xb = if step == remaining {
                target
            } else {
                state.x + dir * step
            };
            if xb == state.x || step <= 1e-15 * state.x.abs().max(1e-300) {
                return Err(Error::NonConvergence(format!(
                    "Picard cell could not be resolved near x = {}",
                    state.x
                )));
            }
            match self.cell(&state, log_pd, xb)? {
                CellOutcome::Done {
                    state: s,
                    sweeps,
                    log_dg: dg,
                } => {
                    state = s;
                    log_dg = log_add(log_dg, dg);
                    log_pd = self.ss.log_scale_density(xb)?;
                    if !state.log_scale.is_finite() {
                        return Err(Error::Overflow { at: xb });
                    }
                    h = if sweeps < 12 { step * 1.6 } else { step };
                }
                CellOutcome::Split => h = 0.5 * step,
            }
        }
        Ok((state, h, log_dg))
    }

    fn cell(&self, s: &State, log_pd_a: f64, xb: f64) -> Result<CellOutcome> {
        let ch = cheb();
        let xa = s.x;
        let half = 0.5 * (xb - xa);
        let spec = self.ss.spec();
        let mut lp_b = log_pd_a;
        let mut w1 = [0.0; CHEB_N + 1];
        let mut w2 = [0.0; CHEB_N + 1];
        for j in 0..=CHEB_N {
            let t = if j == 0 {
                xa
            } else if j == CHEB_N {
                xb
            } else {
                xa + half * (ch.nodes[j] + 1.0)
            };
            let lp = if j == 0 {
                log_pd_a
            } else {
                self.ss.log_scale_density(t)?
            };
            lp_b = lp;
            let sig = spec.volatility_at(t);
            // w1 = p'(t)/p'(a), w2 = r m'(t) p'(a) (times the half-width).
            w1[j] = (lp - log_pd_a).exp() * half;
            w2[j] = self.r * 2.0 / (sig * sig) * (log_pd_a - lp).exp() * half;
            if !(w1[j].is_finite() && w2[j].is_finite()) {
                return Ok(CellOutcome::Split);
            }
        }
        let (f_a, h_a) = (s.f, s.dfdx);
        let mut f = [f_a; CHEB_N + 1];
        let mut h = [h_a; CHEB_N + 1];
        let mut tmp = [0.0; CHEB_N + 1];
        let mut prod = [0.0; CHEB_N + 1];
        let mut sweeps = 0;
        let mut h_inc = 0.0;
        let mut converged = false;
        while sweeps < self.opts.max_sweeps {
            sweeps += 1;
            for j in 0..=CHEB_N {
                prod[j] = h[j] * w1[j];
            }
            apply(&ch.integ, &prod, &mut tmp);
            let f_new: [f64; CHEB_N + 1] = std::array::from_fn(|j| f_a + tmp[j]);
            for j in 0..=CHEB_N {
                prod[j] = f[j] * w2[j];
            }
            apply(&ch.integ, &prod, &mut tmp);
            let h_new: [f64; CHEB_N + 1] = std::array::from_fn(|j| h_a + tmp[j]);
            h_inc = tmp[CHEB_N];
            let norm = |v: &[f64; CHEB_N + 1]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let diff = |a: &[f64; CHEB_N + 1], b: &[f64; CHEB_N + 1]| {
                a.iter()
                    .zip(b.iter())
                    .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            };
            let scale = norm(&f_new).max(norm(&h_new) * half.abs());
            let change = diff(&f_new, &f).max(diff(&h_new, &h) * half.abs());
            f = f_new;
            h = h_new;
            if !scale.is_finite() {
                return Ok(CellOutcome::Split);
            }
            if change <= self.opts.picard_tol * scale {
                converged = true;
                break;
            }
            // Divergent sweeps: the cell is too long for the contraction.
            if sweeps > 3 && change > 0.5 * scale {
                return Ok(CellOutcome::Split);
            }
        }
        if !converged {
            return Ok(CellOutcome::Split);
        }
        let p1: [f64; CHEB_N + 1] = std::array::from_fn(|j| h[j] * w1[j]);
        let p2: [f64; CHEB_N + 1] = std::array::from_fn(|j| f[j] * w2[j]);
        // Weights carry the rounding of ln p', which grows with its magnitude.
        let floor = 1e-13_f64.max(64.0 * f64::EPSILON * (1.0 + log_pd_a.abs().max(lp_b.abs())));
        if tail_ratio(&p1) > floor || tail_ratio(&p2) > floor {
            return Ok(CellOutcome::Split);
        }
        // d+f/dp changes by the integral term alone, at scale p'(a).
        let log_dg = h_inc.abs().ln() + s.log_scale - log_pd_a;
        let mut out = State {
            x: xb,
            f: f[CHEB_N],
            // Back from d/dx at scale p'(a) to d/dx at xb.
            dfdx: h[CHEB_N] * w1[CHEB_N] / half,
            log_scale: s.log_scale,
        };
        out.renormalize();
        Ok(CellOutcome::Done {
            state: out,
            sweeps,
            log_dg,
        })
    }
}

impl ExcessiveFunction {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn hull(&self) -> (f64, f64) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|l| l.exp()).collect()
    }

    pub fn scale_derivatives(&self) -> Vec<f64> {
        let s = self.direction.sign();
        self.log_abs_derivative
            .iter()
            .map(|l| s * l.exp())
            .collect()
    }

    fn outside(&self, x: f64) -> Error {
        let (lo, hi) = self.hull();
        Error::OutsideHull { x, lo, hi }
    }

    /// `ln f(x)` by monotone cubic interpolation.
    pub fn log_evaluate(&self, x: f64) -> Result<f64> {
        let t = &self.fine;
        let k = interp::bracket(&t.x, x).ok_or_else(|| self.outside(x))?;
        let ds = [
            t.log_value_slope(self.direction, k),
            t.log_value_slope(self.direction, k + 1),
        ];
        Ok(interp::hermite(
            &t.x[k..k + 2],
            &t.log_values[k..k + 2],
            &ds,
            0,
            x,
        ))
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        Ok(self.log_evaluate(x)?.exp())
    }

    /// `ln |d+f/dp (x)|`.
    pub fn log_abs_scale_derivative_at(&self, x: f64) -> Result<f64> {
        let t = &self.fine;
        let k = interp::bracket(&t.x, x).ok_or_else(|| self.outside(x))?;
        let r = self.rate.value();
        let ds = [
            t.log_derivative_slope(self.direction, r, k),
            t.log_derivative_slope(self.direction, r, k + 1),
        ];
        Ok(interp::hermite(
            &t.x[k..k + 2],
            &t.log_abs_derivative[k..k + 2],
            &ds,
            0,
            x,
        ))
    }

    pub fn scale_derivative_at(&self, x: f64) -> Result<f64> {
        Ok(self.direction.sign() * self.log_abs_scale_derivative_at(x)?.exp())
    }

    /// Multiplies the function (and hence its scale derivative) by `c > 0`.
    pub fn rescaled(&self, c: f64) -> Self {
        let lc = c.ln();
        let mut out = self.clone();
        for v in out
            .log_values
            .iter_mut()
            .chain(out.log_abs_derivative.iter_mut())
            .chain(out.log_abs_increment.iter_mut())
            .chain(out.fine.log_values.iter_mut())
            .chain(out.fine.log_abs_derivative.iter_mut())
        {
            *v += lc;
        }
        out.far_edge_log_value += lc;
        out
    }

    /// Value just beyond the grid toward the endpoint where the associated
    /// local martingale is stopped; infinite when it overflowed.
    pub fn far_edge_value(&self) -> f64 {
        self.far_edge_log_value.exp()
    }

    /// For consecutive nodes, the relative mismatch between the change of
    /// `d+f/dp` and `r int_{x1}^{x2} f dm`, the latter by quadrature of the
    /// interpolated solution.
    pub fn ode_residuals(&self, ss: &ScaleSpeed) -> Result<Vec<f64>> {
        let quad = crate::quadrature::QuadOptions {
            abs_tol: 0.0,
            rel_tol: 1e-12,
            ..Default::default()
        };
        let r = self.rate.value();
        (0..self.grid.len() - 1)
            .map(|k| {
                let (x1, x2) = (self.grid[k], self.grid[k + 1]);
                let log_integrand = |u: f64| -> Result<f64> {
                    Ok(self.log_evaluate(u)? + ss.log_speed_density(u)?)
                };
                let lm = crate::quadrature::log_integral_exp(log_integrand, x1, x2, &quad)?;
                Ok(((self.log_abs_increment[k] - lm - r.ln()).exp() - 1.0).abs())
            })
            .collect()
    }

    /// Grid indices ordered from the reference point toward `side`.
    pub fn indices_toward(&self, side: Side) -> Vec<usize> {
        match side {
            Side::Beta => (self.normalization_index..self.grid.len()).collect(),
            Side::Alpha => (0..=self.normalization_index).rev().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::catalog_with;
    use crate::scale::derive_scale_speed;

    fn rate(r: f64) -> DiscountRate {
        DiscountRate::new(r).unwrap()
    }

    #[test]
    fn chebyshev_integration_is_exact_for_polynomials() {
        let ch = cheb();
        let v: [f64; CHEB_N + 1] = std::array::from_fn(|j| {
            let y = ch.nodes[j];
            3.0 * y * y - 2.0 * y + 1.0
        });
        let mut out = [0.0; CHEB_N + 1];
        apply(&ch.integ, &v, &mut out);
        for j in 0..=CHEB_N {
            let y = ch.nodes[j];
            let exact = (y * y * y - y * y + y) - (-1.0 - 1.0 - 1.0);
            assert!((out[j] - exact).abs() < 1e-13, "{j}: {} vs {exact}", out[j]);
        }
    }

    #[test]
    fn rejects_nonpositive_rates() {
        assert!(DiscountRate::new(0.0).is_err());
        assert!(DiscountRate::new(-1.0).is_err());
        assert!(DiscountRate::new(f64::NAN).is_err());
    }

    #[test]
    fn brownian_psi_is_exponential() {
        let ss = derive_scale_speed(&catalog_with("brownian", &[]).unwrap()).unwrap();
        let psi =
            solve_excessive(&ss, rate(0.5), Direction::Increasing, &GridSpec::default()).unwrap();
        assert_eq!(psi.evaluate(0.0).unwrap(), 1.0);
        let at1 = psi.evaluate(1.0).unwrap();
        assert!((at1 - 1f64.exp()).abs() < 1e-6 * at1, "{at1}");
        let mid = psi.evaluate(0.5).unwrap();
        assert!((mid - 0.5f64.exp()).abs() < 1e-6, "{mid}");
        assert!((psi.scale_derivative_at(0.0).unwrap() - 1.0).abs() < 1e-8);
        assert!(psi.evaluate(1e6).is_err());
    }

    #[test]
    fn bessel3_phi_is_decreasing() {
        let ss = derive_scale_speed(&catalog_with("bessel", &[("delta", 3.0)]).unwrap()).unwrap();
        let phi =
            solve_excessive(&ss, rate(0.5), Direction::Decreasing, &GridSpec::default()).unwrap();
        assert!(phi.scale_derivatives().iter().all(|&g| g <= 0.0));
        for x in [0.01f64, 0.3, 2.0, 10.0] {
            let exact = (-x).exp() / x / (-1f64).exp();
            let got = phi.evaluate(x).unwrap();
            assert!((got / exact - 1.0).abs() < 1e-7, "{x}: {got} vs {exact}");
        }
    }
}
