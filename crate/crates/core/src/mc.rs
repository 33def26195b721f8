//! Monte Carlo realization of the diffusion by Euler-Maruyama.
//!
//! Each path owns a ChaCha stream selected by its index, and per-path results
//! are reduced by fixed-order pairwise summation, so estimates are
//! bit-identical for a given seed whatever the thread schedule.
//!
//! Near an inaccessible finite endpoint an overshooting step is reflected back
//! by the overshoot (a numerical guard; the exact process never gets there).
//! Accessible endpoints are absorbing, with the absorption time interpolated
//! linearly within the step.

use crate::boundary::{classify_both, scale_limit, BoundaryKind};
use crate::diffusion::{DiffusionSpec, Side};
use crate::error::{Error, Result};
use crate::excessive::{DiscountRate, ExcessiveFunction};
use crate::scale::{derive_scale_speed, ScaleSpeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.575_829_303_548_900_4;

/// Largest ensemble (paths times states) that [`simulate`] will store.
pub const MAX_STORED_STATES: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryPolicy {
    #[default]
    AbsorbAtAccessible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub initial_state: f64,
    pub horizon: f64,
    pub step: f64,
    pub paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub boundary_policy: BoundaryPolicy,
}

impl SimulationConfig {
    pub fn new(
        initial_state: f64,
        horizon: f64,
        step: f64,
        paths: usize,
        seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            initial_state,
            horizon,
            step,
            paths,
            seed,
            boundary_policy: BoundaryPolicy::AbsorbAtAccessible,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// A zero horizon is allowed (nothing evolves); otherwise `0 < step < horizon`.
    pub fn validate(&self) -> Result<()> {
        if !self.initial_state.is_finite() {
            return Err(Error::Config("initial state must be finite".into()));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::Config(format!(
                "horizon must be finite and >= 0, got {}",
                self.horizon
            )));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::Config(format!(
                "step must be finite and > 0, got {}",
                self.step
            )));
        }
        if self.horizon > 0.0 && self.step >= self.horizon {
            return Err(Error::Config(format!(
                "step {} must be smaller than the horizon {}",
                self.step, self.horizon
            )));
        }
        if self.paths < 100 {
            return Err(Error::Config(format!(
                "at least 100 paths are required, got {}",
                self.paths
            )));
        }
        Ok(())
    }

    /// Number of Euler steps; the last one may be shorter.
    pub fn steps(&self) -> usize {
        if self.horizon == 0.0 {
            0
        } else {
            (self.horizon / self.step - 1e-9).ceil() as usize
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        (k as f64 * self.step).min(self.horizon)
    }

    pub fn with_horizon(&self, horizon: f64) -> Self {
        Self { horizon, ..*self }
    }

    pub fn with_initial_state(&self, x: f64) -> Self {
        Self {
            initial_state: x,
            ..*self
        }
    }
}

/// The random stream of path `index`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sample mean with a normal-theory 99% confidence half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub mean: f64,
    pub half_width: f64,
    pub n_effective: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EstimateWithCI {
    /// From per-path values, reduced in index order.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        let mean = pairwise_sum(values) / n as f64;
        let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if n > 1 {
            pairwise_sum(&dev) / (n - 1) as f64
        } else {
            0.0
        };
        let half_width = (Z99 * (var / n as f64).sqrt()).max(f64::EPSILON * mean.abs().max(1.0));
        Self {
            mean,
            half_width,
            n_effective: n,
            warnings: Vec::new(),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.mean - v).abs() <= self.half_width
    }
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        v.iter().sum()
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Absorption {
    pub side: Side,
    pub time: f64,
}

/// How a simulated path ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEnd {
    pub state: f64,
    /// `t ∧ T`: the horizon, or the absorption or level-hitting time.
    pub time: f64,
    pub absorbed: Option<Side>,
    pub hit_level: bool,
    pub reflections: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    /// One row per path; constant after absorption.
    pub states: Vec<Vec<f64>>,
    pub absorption: Vec<Option<Absorption>>,
    pub rng_stream_ids: Vec<u64>,
}

/// Path generator for one diffusion and configuration.
pub struct Simulator<'a> {
    spec: &'a DiffusionSpec,
    cfg: SimulationConfig,
    absorbing: [bool; 2],
}

impl<'a> Simulator<'a> {
    /// Classifies the endpoints to decide which ones absorb.
    pub fn new(spec: &'a DiffusionSpec, cfg: SimulationConfig) -> Result<Self> {
        let ss = derive_scale_speed(spec)?;
        let (a, b) = classify_both(&ss)?;
        Self::with_absorbing(
            spec,
            cfg,
            a.kind == BoundaryKind::Accessible,
            b.kind == BoundaryKind::Accessible,
        )
    }

    pub fn with_absorbing(
        spec: &'a DiffusionSpec,
        cfg: SimulationConfig,
        alpha: bool,
        beta: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        if !spec.interval.contains_interior(cfg.initial_state) {
            return Err(Error::Config(format!(
                "initial state {} is not interior to {}",
                cfg.initial_state,
                spec.label()
            )));
        }
        Ok(Self {
            spec,
            cfg,
            absorbing: [alpha, beta],
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.cfg
    }

    pub fn is_absorbing(&self, side: Side) -> bool {
        self.absorbing[(side == Side::Beta) as usize]
    }

    /// Runs path `index`, calling `observe(k, x_k)` after every completed step
    /// while the path is alive. An optional level absorbs the path when crossed.
    pub fn run_path(
        &self,
        index: u64,
        level: Option<f64>,
        mut observe: impl FnMut(usize, f64),
    ) -> Result<PathEnd> {
        let cfg = &self.cfg;
        let (lo, hi) = (self.spec.interval.alpha, self.spec.interval.beta);
        let mut rng = path_rng(cfg.seed, index);
        let mut x = cfg.initial_state;
        let mut reflections = 0;
        let up = level.map(|y| y > x);
        if let Some(y) = level {
            if y == x {
                return Ok(PathEnd {
                    state: x,
                    time: 0.0,
                    absorbed: None,
                    hit_level: true,
                    reflections,
                });
            }
        }
        let n = cfg.steps();
        for k in 0..n {
            let (t0, t1) = (cfg.time(k), cfg.time(k + 1));
            let dt = t1 - t0;
            let b = self.spec.drift_at(x);
            let s = self.spec.volatility_at(x);
            if !(b.is_finite() && s.is_finite()) {
                return Err(Error::Simulation(format!(
                    "coefficients not finite at x = {x} (path {index})"
                )));
            }
            let z: f64 = rng.sample(StandardNormal);
            let mut next = x + b * dt + s * dt.sqrt() * z;
            if let (Some(y), Some(up)) = (level, up) {
                let crossed = if up { next >= y } else { next <= y };
                // Continuous-path crossing within the step (Brownian bridge).
                let bridge = !crossed && {
                    let p = (-2.0 * (y - x) * (y - next) / (s * s * dt)).exp();
                    let u: f64 = rng.gen();
                    u < p
                };
                if crossed || bridge {
                    let frac = if crossed { (y - x) / (next - x) } else { 0.5 };
                    return Ok(PathEnd {
                        state: y,
                        time: t0 + frac.clamp(0.0, 1.0) * dt,
                        absorbed: None,
                        hit_level: true,
                        reflections,
                    });
                }
            }
            for (side, edge) in [(Side::Alpha, lo), (Side::Beta, hi)] {
                let outside = match side {
                    Side::Alpha => next <= edge,
                    Side::Beta => next >= edge,
                };
                if !outside || !edge.is_finite() {
                    continue;
                }
                if self.is_absorbing(side) {
                    let frac = (edge - x) / (next - x);
                    return Ok(PathEnd {
                        state: edge,
                        time: t0 + frac.clamp(0.0, 1.0) * dt,
                        absorbed: Some(side),
                        hit_level: false,
                        reflections,
                    });
                }
                reflections += 1;
                next = 2.0 * edge - next;
                if !self.spec.interval.contains_interior(next) {
                    // Overshoot beyond the whole interval or onto the edge.
                    next = match side {
                        Side::Alpha => f64::max(edge + (x - edge) * 0.5, next_toward(edge, hi)),
                        Side::Beta => f64::min(edge - (edge - x) * 0.5, next_toward(edge, lo)),
                    };
                }
            }
            if !self.spec.interval.contains_interior(next) {
                return Err(Error::Simulation(format!(
                    "state {next} left the interval at step {k} of path {index}"
                )));
            }
            x = next;
            observe(k + 1, x);
        }
        Ok(PathEnd {
            state: x,
            time: cfg.horizon,
            absorbed: None,
            hit_level: false,
            reflections,
        })
    }

    /// Per-path values `g(index, end)` in index order.
    fn map_paths(
        &self,
        level: Option<f64>,
        g: impl Fn(PathEnd) -> Result<f64> + Sync,
    ) -> Result<Vec<f64>> {
        (0..self.cfg.paths as u64)
            .into_par_iter()
            .map(|i| g(self.run_path(i, level, |_, _| {})?))
            .collect()
    }
}

fn next_toward(from: f64, to: f64) -> f64 {
    if to > from {
        f64::from_bits(if from >= 0.0 {
            from.to_bits() + 1
        } else {
            from.to_bits() - 1
        })
    } else {
        f64::from_bits(if from > 0.0 {
            from.to_bits() - 1
        } else {
            from.to_bits() + 1
        })
    }
}

/// Simulates and stores every path (small runs only).
pub fn simulate(spec: &DiffusionSpec, cfg: SimulationConfig) -> Result<PathEnsemble> {
    let sim = Simulator::new(spec, cfg)?;
    simulate_with(&sim)
}

pub fn simulate_with(sim: &Simulator<'_>) -> Result<PathEnsemble> {
    let cfg = sim.cfg;
    let n = cfg.steps();
    if cfg.paths.saturating_mul(n + 1) > MAX_STORED_STATES {
        return Err(Error::Config(format!(
            "{} paths of {} states exceed the stored-ensemble limit of {MAX_STORED_STATES}; use the streaming estimators",
            cfg.paths,
            n + 1
        )));
    }
    let rows: Vec<(Vec<f64>, Option<Absorption>)> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(n + 1);
            row.push(cfg.initial_state);
            let end = sim.run_path(i, None, |_, x| row.push(x))?;
            let absorption = end.absorbed.map(|side| Absorption {
                side,
                time: end.time,
            });
            row.resize(n + 1, end.state);
            Ok((row, absorption))
        })
        .collect::<Result<_>>()?;
    let (states, absorption) = rows.into_iter().unzip();
    Ok(PathEnsemble {
        times: (0..=n).map(|k| cfg.time(k)).collect(),
        states,
        absorption,
        rng_stream_ids: (0..cfg.paths as u64).collect(),
    })
}

/// Value of `f` at a stopped state, using the boundary value when absorbed.
fn stopped_value(
    f: &ExcessiveFunction,
    end: &PathEnd,
    outside: &std::sync::atomic::AtomicUsize,
) -> f64 {
    match end.absorbed {
        // Absorbed where the solution is recessive: it vanishes there.
        Some(side) if side == f.direction.start_side() => 0.0,
        Some(_) => f.far_edge_value(),
        None => match f.evaluate(end.state) {
            Ok(v) => v,
            Err(_) => {
                outside.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let (lo, hi) = f.hull();
                f.evaluate(end.state.clamp(lo, hi)).unwrap_or(f64::NAN)
            }
        },
    }
}

/// Largest fraction of paths allowed to end outside the solved grid.
pub const MAX_OUTSIDE_FRACTION: f64 = 1e-3;

/// `f(x) - E_x[e^{-r(t∧T)} f(X_{t∧T})]`.
pub fn martingale_deficit(
    spec: &DiffusionSpec,
    f: &ExcessiveFunction,
    cfg: SimulationConfig,
) -> Result<EstimateWithCI> {
    let sim = Simulator::new(spec, cfg)?;
    martingale_deficit_with(&sim, f)
}

pub fn martingale_deficit_with(
    sim: &Simulator<'_>,
    f: &ExcessiveFunction,
) -> Result<EstimateWithCI> {
    let cfg = sim.cfg;
    let r = f.rate.value();
    let fx = f.evaluate(cfg.initial_state)?;
    if cfg.horizon == 0.0 {
        return Ok(EstimateWithCI::from_samples(&vec![0.0; cfg.paths]));
    }
    let outside = std::sync::atomic::AtomicUsize::new(0);
    let values = sim.map_paths(None, |end| {
        Ok(fx - (-r * end.time).exp() * stopped_value(f, &end, &outside))
    })?;
    let outside = outside.into_inner();
    let frac = outside as f64 / cfg.paths as f64;
    if frac > MAX_OUTSIDE_FRACTION {
        return Err(Error::Simulation(format!(
            "{:.3}% of paths ended outside the solved grid (limit {:.1}%)",
            100.0 * frac,
            100.0 * MAX_OUTSIDE_FRACTION
        )));
    }
    let mut est = EstimateWithCI::from_samples(&values);
    if outside > 0 {
        est.warnings.push(format!(
            "{outside} paths ended outside the solved grid and were clamped to its hull"
        ));
    }
    Ok(est)
}

/// Deficit at one observation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    pub t: f64,
    pub deficit: EstimateWithCI,
}

/// Deficits at several times (snapped to the step grid) from one set of paths.
pub fn deficit_profile_with(
    sim: &Simulator<'_>,
    f: &ExcessiveFunction,
    times: &[f64],
) -> Result<Vec<TimePoint>> {
    let cfg = sim.cfg;
    let r = f.rate.value();
    let fx = f.evaluate(cfg.initial_state)?;
    let n = cfg.steps();
    let mut ks: Vec<usize> = times
        .iter()
        .map(|&t| {
            if !(0.0..=cfg.horizon).contains(&t) {
                return Err(Error::Config(format!(
                    "observation time {t} is outside [0, {}]",
                    cfg.horizon
                )));
            }
            Ok(((t / cfg.step).round() as usize).min(n))
        })
        .collect::<Result<_>>()?;
    ks.sort_unstable();
    ks.dedup();
    let m = ks.len();
    let outside = std::sync::atomic::AtomicUsize::new(0);
    let rows: Vec<Vec<f64>> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(m);
            while row.len() < m && ks[row.len()] == 0 {
                row.push(0.0);
            }
            let end = sim.run_path(i, None, |k, xk| {
                while row.len() < m && ks[row.len()] == k {
                    let v = f.evaluate(xk).unwrap_or_else(|_| {
                        outside.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        let (lo, hi) = f.hull();
                        f.evaluate(xk.clamp(lo, hi)).unwrap_or(f64::NAN)
                    });
                    row.push(fx - (-r * cfg.time(k)).exp() * v);
                }
            })?;
            if row.len() < m {
                let v = stopped_value(f, &end, &outside);
                let stopped = fx - (-r * end.time).exp() * v;
                row.resize(m, stopped);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let outside = outside.into_inner();
    if outside as f64 > MAX_OUTSIDE_FRACTION * (cfg.paths * m) as f64 {
        return Err(Error::Simulation(format!(
            "{outside} observations fell outside the solved grid (limit {:.1}%)",
            100.0 * MAX_OUTSIDE_FRACTION
        )));
    }
    Ok(ks
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let column: Vec<f64> = rows.iter().map(|row| row[j]).collect();
            TimePoint {
                t: cfg.time(k),
                deficit: EstimateWithCI::from_samples(&column),
            }
        })
        .collect())
}

/// `p(x) - E_x[p(X_{t∧T})]` for the scale process stopped at accessible endpoints.
pub fn scale_deficit(spec: &DiffusionSpec, cfg: SimulationConfig) -> Result<EstimateWithCI> {
    let ss = derive_scale_speed(spec)?;
    let sim = Simulator::new(spec, cfg)?;
    scale_deficit_with(&sim, &ss)
}

pub fn scale_deficit_with(sim: &Simulator<'_>, ss: &ScaleSpeed) -> Result<EstimateWithCI> {
    let cfg = sim.cfg;
    let px = ss.scale(cfg.initial_state)?;
    let mut edge = [f64::NAN; 2];
    for side in [Side::Alpha, Side::Beta] {
        if sim.is_absorbing(side) {
            edge[(side == Side::Beta) as usize] = scale_limit(ss, side)?.value;
        }
    }
    let values = sim.map_paths(None, |end| {
        let p = match end.absorbed {
            Some(side) => edge[(side == Side::Beta) as usize],
            None => ss.scale(end.state)?,
        };
        if !p.is_finite() {
            return Err(Error::Simulation(format!(
                "scale function not finite at {}",
                end.state
            )));
        }
        Ok(px - p)
    })?;
    Ok(EstimateWithCI::from_samples(&values))
}

/// `E_x[e^{-r T_y}]`, with paths not reaching `y` by the horizon counted as 0.
pub fn hitting_laplace(
    spec: &DiffusionSpec,
    y: f64,
    r: DiscountRate,
    cfg: SimulationConfig,
) -> Result<EstimateWithCI> {
    let sim = Simulator::new(spec, cfg)?;
    hitting_laplace_with(&sim, y, r)
}

pub fn hitting_laplace_with(
    sim: &Simulator<'_>,
    y: f64,
    r: DiscountRate,
) -> Result<EstimateWithCI> {
    let cfg = sim.cfg;
    if !sim.spec.interval.contains_interior(y) {
        return Err(Error::Config(format!("level {y} is not interior")));
    }
    let censored = std::sync::atomic::AtomicUsize::new(0);
    let values = sim.map_paths(Some(y), |end| {
        if end.hit_level {
            Ok((-r.value() * end.time).exp())
        } else {
            if end.absorbed.is_none() {
                censored.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            }
            Ok(0.0)
        }
    })?;
    let mut est = EstimateWithCI::from_samples(&values);
    let censored = censored.into_inner() as f64 / cfg.paths as f64;
    // Censored paths could still hit later, contributing at most e^{-r t} each.
    let bias_bound = censored * (-r.value() * cfg.horizon).exp();
    if bias_bound > 0.5 * est.half_width {
        est.warnings.push(format!(
            "{:.2}% of paths were censored at the horizon; the downward bias may reach {bias_bound:.3e}",
            100.0 * censored
        ));
    }
    Ok(est)
}

/// Both sides of the limit identity for `f_r / f_s` at the endpoint where they blow up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioIdentity {
    pub side: Side,
    /// `lim f_r / f_s` from the limit diagnostics.
    #[serde(with = "crate::report::ext")]
    pub lhs: f64,
    /// `f_r(x)/f_s(x) - (s - r)/f_s(x) int_0^t e^{-(s-r)u} E_x[e^{-ru} f_r(X_u)] du`.
    pub rhs: EstimateWithCI,
    /// Bound on the part of the time integral beyond the horizon, in `rhs` units.
    pub truncation_bound: f64,
}

impl RatioIdentity {
    pub fn agrees(&self, half_widths: f64) -> bool {
        (self.lhs - self.rhs.mean).abs() <= half_widths * self.rhs.half_width
    }
}

/// Number of points in the time grid of the ratio identity.
pub const RATIO_TIME_POINTS: usize = 64;

/// Checks the ratio identity with solved `f_r`, `f_s` (psi at the upper
/// endpoint, phi at the lower) and the limit `lhs` of `f_r / f_s`.
pub fn ratio_identity_with(
    sim: &Simulator<'_>,
    f_r: &ExcessiveFunction,
    f_s: &ExcessiveFunction,
    lhs: f64,
) -> Result<RatioIdentity> {
    let cfg = sim.cfg;
    let (r, s) = (f_r.rate.value(), f_s.rate.value());
    if s <= r || f_r.direction != f_s.direction {
        return Err(Error::Config(
            "the ratio identity needs s > r and functions of the same direction".into(),
        ));
    }
    let side = f_r.direction.far_side();
    let x = cfg.initial_state;
    let (frx, fsx) = (f_r.evaluate(x)?, f_s.evaluate(x)?);
    // Geometric time grid on [step, horizon], snapped to the Euler grid, plus 0.
    let n = cfg.steps();
    let mut ks: Vec<usize> = vec![0];
    for i in 0..RATIO_TIME_POINTS {
        let t = cfg.step * (cfg.horizon / cfg.step).powf(i as f64 / (RATIO_TIME_POINTS - 1) as f64);
        ks.push(((t / cfg.step).round() as usize).clamp(1, n));
    }
    ks.dedup();
    let times: Vec<f64> = ks.iter().map(|&k| cfg.time(k)).collect();
    // Trapezoid weights times e^{-(s-r)u} e^{-ru} = e^{-su}.
    let mut weights = vec![0.0; ks.len()];
    for i in 0..ks.len() - 1 {
        let h = times[i + 1] - times[i];
        weights[i] += 0.5 * h;
        weights[i + 1] += 0.5 * h;
    }
    for (w, t) in weights.iter_mut().zip(&times) {
        *w *= (-s * t).exp();
    }
    let outside = std::sync::atomic::AtomicUsize::new(0);
    let values: Vec<f64> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut acc = weights[0] * frx;
            let mut next = 1;
            let end = sim.run_path(i, None, |k, xk| {
                while next < ks.len() && ks[next] == k {
                    let v = f_r.evaluate(xk).unwrap_or_else(|_| {
                        outside.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        let (lo, hi) = f_r.hull();
                        f_r.evaluate(xk.clamp(lo, hi)).unwrap_or(f64::NAN)
                    });
                    acc += weights[next] * v;
                    next += 1;
                }
            })?;
            // A stopped path keeps its final value.
            if next < ks.len() {
                let v = stopped_value(f_r, &end, &outside);
                acc += weights[next..].iter().sum::<f64>() * v;
            }
            Ok(frx / fsx - (s - r) / fsx * acc)
        })
        .collect::<Result<_>>()?;
    let mut rhs = EstimateWithCI::from_samples(&values);
    let truncation_bound = frx * (-(s - r) * cfg.horizon).exp() / fsx;
    if truncation_bound > 0.5 * rhs.half_width {
        return Err(Error::inconclusive(
            "ratio identity",
            format!(
                "time-integral truncation bound {truncation_bound:.3e} exceeds half the confidence half-width {:.3e}; lengthen the horizon",
                rhs.half_width
            ),
        ));
    }
    let outside = outside.into_inner();
    if outside > 0 {
        rhs.warnings.push(format!(
            "{outside} observations fell outside the solved grid and were clamped"
        ));
    }
    Ok(RatioIdentity {
        side,
        lhs,
        rhs,
        truncation_bound,
    })
}

/// Outcome of a deficit test at 99% confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeficitVerdict {
    MartingaleConsistent,
    StrictConsistent,
    Inconclusive,
}

impl fmt::Display for DeficitVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            DeficitVerdict::MartingaleConsistent => "martingale-consistent",
            DeficitVerdict::StrictConsistent => "strict-consistent",
            DeficitVerdict::Inconclusive => "inconclusive",
        })
    }
}

/// A nonnegative supermartingale deficit: zero inside the interval, strict above it.
pub fn deficit_verdict(deficit: &EstimateWithCI) -> DeficitVerdict {
    if deficit.contains(0.0) {
        DeficitVerdict::MartingaleConsistent
    } else if deficit.mean > 0.0 {
        DeficitVerdict::StrictConsistent
    } else {
        DeficitVerdict::Inconclusive
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::catalog_with;

    fn brownian() -> DiffusionSpec {
        catalog_with("brownian", &[]).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SimulationConfig::new(0.0, 1.0, 1.0, 100, 1).is_err());
        assert!(SimulationConfig::new(0.0, 1.0, 0.1, 99, 1).is_err());
        assert!(SimulationConfig::new(0.0, -1.0, 0.1, 100, 1).is_err());
        assert!(SimulationConfig::new(0.0, 0.0, 0.1, 100, 1).is_ok());
        let c = SimulationConfig::new(0.0, 1.0, 0.3, 100, 1).unwrap();
        assert_eq!(c.steps(), 4);
        assert_eq!(c.time(4), 1.0);
    }

    #[test]
    fn first_increment_is_scaled_normal() {
        let spec = brownian();
        let cfg = SimulationConfig::new(0.0, 1.0, 0.01, 100, 42).unwrap();
        let sim = Simulator::with_absorbing(&spec, cfg, false, false).unwrap();
        let mut first = None;
        sim.run_path(7, None, |k, x| {
            if k == 1 {
                first = Some(x)
            }
        })
        .unwrap();
        let z: f64 = path_rng(42, 7).sample(StandardNormal);
        assert_eq!(first.unwrap(), 0.1 * z);
    }

    #[test]
    fn ensemble_is_reproducible_and_constant_after_absorption() {
        let spec = catalog_with("cir", &[("kappa", 1.0), ("theta", 1.0), ("sigma", 2.0)]).unwrap();
        let cfg = SimulationConfig::new(0.2, 1.0, 0.01, 200, 3).unwrap();
        let a = simulate(&spec, cfg).unwrap();
        let b = simulate(&spec, cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.absorption.iter().any(|x| x.is_some()));
        for (row, abs) in a.states.iter().zip(&a.absorption) {
            if let Some(abs) = abs {
                let k = (abs.time / cfg.step).ceil() as usize;
                assert!(row[k..].iter().all(|&x| x == 0.0));
            } else {
                assert!(row.iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn level_at_start_is_hit_immediately() {
        let spec = brownian();
        let cfg = SimulationConfig::new(0.0, 1.0, 0.01, 100, 1).unwrap();
        let est = hitting_laplace(&spec, 0.0, DiscountRate::new(0.5).unwrap(), cfg).unwrap();
        assert_eq!(est.mean, 1.0);
        assert!(est.half_width > 0.0);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }
}
