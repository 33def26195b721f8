//! The operations behind each command, producing serializable documents.

use crate::boundary::{classify_both, BoundaryClass};
use crate::diffusion::{DiffusionSpec, Side};
use crate::error::{Error, Result};
use crate::excessive::{solve_excessive, Direction, DiscountRate, ExcessiveFunction};
use crate::grid::GridSpec;
use crate::martingale::{
    direction_for, full_report, kotani_verdict, row_b_from, verdict_from_boundary, FullReport,
    MartingaleVerdict, Regime, Verdict,
};
use crate::mc::{
    deficit_profile_with, deficit_verdict, martingale_deficit_with, ratio_identity_with,
    scale_deficit_with, DeficitVerdict, EstimateWithCI, RatioIdentity, SimulationConfig, Simulator,
    TimePoint,
};
use crate::scale::derive_scale_speed;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyDoc {
    pub diffusion: String,
    pub alpha: BoundaryClass,
    pub beta: BoundaryClass,
}

pub fn classify(spec: &DiffusionSpec) -> Result<ClassifyDoc> {
    let (alpha, beta) = classify_both(&derive_scale_speed(spec)?)?;
    Ok(ClassifyDoc {
        diffusion: spec.label(),
        alpha,
        beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveRow {
    pub x: f64,
    #[serde(with = "crate::report::ext")]
    pub p: f64,
    /// `f(x)`, or `ln f(x)` in log space.
    #[serde(with = "crate::report::ext")]
    pub value: f64,
    /// `d+f/dp(x)`, or `ln |d+f/dp(x)|` in log space.
    #[serde(with = "crate::report::ext")]
    pub dvalue_dp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDoc {
    pub diffusion: String,
    pub direction: Direction,
    pub rate: DiscountRate,
    pub normalization_point: f64,
    pub log_space: bool,
    pub rows: Vec<SolveRow>,
}

impl SolveDoc {
    pub fn from_function(diffusion: String, f: &ExcessiveFunction, log_space: bool) -> Self {
        let rows = (0..f.len())
            .map(|k| SolveRow {
                x: f.grid[k],
                p: f.scale[k],
                value: if log_space {
                    f.log_values[k]
                } else {
                    f.log_values[k].exp()
                },
                dvalue_dp: if log_space {
                    f.log_abs_derivative[k]
                } else {
                    f.direction.sign() * f.log_abs_derivative[k].exp()
                },
            })
            .collect();
        Self {
            diffusion,
            direction: f.direction,
            rate: f.rate,
            normalization_point: f.normalization_point,
            log_space,
            rows,
        }
    }

    /// Columns `x, p(x), value, dvalue_dp` (log-space names when applicable).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(if self.log_space {
            "x,p(x),log_value,log_abs_dvalue_dp\n"
        } else {
            "x,p(x),value,dvalue_dp\n"
        });
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.x, r.p, r.value, r.dvalue_dp);
        }
        out
    }
}

pub fn solve(
    spec: &DiffusionSpec,
    r: DiscountRate,
    direction: Direction,
    log_space: bool,
) -> Result<SolveDoc> {
    let ss = derive_scale_speed(spec)?;
    let f = solve_excessive(&ss, r, direction, &GridSpec::default())?;
    Ok(SolveDoc::from_function(spec.label(), &f, log_space))
}

pub fn table(spec: &DiffusionSpec, rates: &[DiscountRate]) -> Result<FullReport> {
    full_report(spec, rates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictDoc {
    pub diffusion: String,
    pub alpha: MartingaleVerdict,
    pub beta: MartingaleVerdict,
    pub scale_process: MartingaleVerdict,
}

pub fn verdicts(spec: &DiffusionSpec) -> Result<VerdictDoc> {
    let (a, b) = classify_both(&derive_scale_speed(spec)?)?;
    Ok(VerdictDoc {
        diffusion: spec.label(),
        alpha: verdict_from_boundary(&a, Side::Alpha, false),
        beta: verdict_from_boundary(&b, Side::Beta, false),
        scale_process: kotani_verdict(&a, &b),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyRequest {
    pub side: Side,
    pub r: DiscountRate,
    /// Also check the ratio identity against this larger rate.
    pub s: Option<DiscountRate>,
    pub simulation: SimulationConfig,
    /// Number of equally spaced times for the deficit profile (0 for none).
    pub profile_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyDoc {
    pub diffusion: String,
    pub side: Side,
    pub direction: Direction,
    pub r: DiscountRate,
    pub simulation: SimulationConfig,
    pub deficit: EstimateWithCI,
    pub outcome: DeficitVerdict,
    pub expected: Verdict,
    pub agrees: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub profile: Vec<TimePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_identity: Option<RatioIdentity>,
}

impl VerifyDoc {
    /// Columns `t, deficit, half_width`.
    pub fn profile_csv(&self) -> String {
        let mut out = String::from("t,deficit,half_width\n");
        for p in &self.profile {
            let _ = writeln!(out, "{},{},{}", p.t, p.deficit.mean, p.deficit.half_width);
        }
        out
    }
}

/// Whether a deficit test outcome matches the analytic verdict.
pub fn outcome_matches(outcome: DeficitVerdict, expected: Verdict) -> bool {
    match expected {
        Verdict::Martingale | Verdict::DegenerateZero => {
            outcome == DeficitVerdict::MartingaleConsistent
        }
        Verdict::StrictLocalMartingale => outcome == DeficitVerdict::StrictConsistent,
        Verdict::Supermartingale | Verdict::Submartingale => false,
    }
}

pub fn verify(spec: &DiffusionSpec, req: &VerifyRequest) -> Result<VerifyDoc> {
    let ss = derive_scale_speed(spec)?;
    let (ca, cb) = classify_both(&ss)?;
    let class = if req.side == Side::Alpha { &ca } else { &cb };
    let expected = verdict_from_boundary(class, req.side, false).verdict;
    let sim = Simulator::with_absorbing(
        spec,
        req.simulation,
        ca.kind == crate::boundary::BoundaryKind::Accessible,
        cb.kind == crate::boundary::BoundaryKind::Accessible,
    )?;
    let grid = GridSpec::default();
    let direction = direction_for(req.side);
    let f = solve_excessive(&ss, req.r, direction, &grid)?;
    let deficit = martingale_deficit_with(&sim, &f)?;
    let outcome = deficit_verdict(&deficit);
    let profile = if req.profile_points > 0 {
        let h = req.simulation.horizon;
        let times: Vec<f64> = (1..=req.profile_points)
            .map(|k| h * k as f64 / req.profile_points as f64)
            .collect();
        deficit_profile_with(&sim, &f, &times)?
    } else {
        Vec::new()
    };
    let ratio_identity = match req.s {
        None => None,
        Some(s) => {
            let f_s = solve_excessive(&ss, s, direction, &grid)?;
            let b = row_b_from(&ss, &grid, &f, &f_s, req.side)?;
            if b.regime == Regime::Inconclusive {
                return Err(Error::inconclusive(
                    "ratio limit",
                    format!("lim f_s/f_r at {} is inconclusive", req.side),
                ));
            }
            let lhs = if b.value.is_infinite() {
                0.0
            } else {
                1.0 / b.value
            };
            Some(ratio_identity_with(&sim, &f, &f_s, lhs)?)
        }
    };
    Ok(VerifyDoc {
        diffusion: spec.label(),
        side: req.side,
        direction,
        r: req.r,
        simulation: req.simulation,
        deficit,
        outcome,
        expected,
        agrees: outcome_matches(outcome, expected),
        profile,
        ratio_identity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleCheck {
    pub deficit: EstimateWithCI,
    pub expected: Verdict,
    /// `None` when the verdict does not fix the sign of the deficit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agrees: Option<bool>,
}

/// `p(x) - E p(X_t)`: zero for a martingale, positive for a (strict)
/// supermartingale, negative for a strict submartingale.
pub fn scale_outcome_matches(deficit: &EstimateWithCI, expected: Verdict) -> Option<bool> {
    let zero = deficit.contains(0.0);
    match expected {
        Verdict::Martingale => Some(zero),
        Verdict::Supermartingale => Some(!zero && deficit.mean > 0.0),
        Verdict::Submartingale => Some(!zero && deficit.mean < 0.0),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub table: FullReport,
    pub alpha: VerifyDoc,
    pub beta: VerifyDoc,
    pub scale_process: ScaleCheck,
}

impl ReportDoc {
    pub fn all_agree(&self) -> bool {
        self.alpha.agrees && self.beta.agrees && self.scale_process.agrees != Some(false)
    }
}

/// Classification, all rows, verdicts and Monte Carlo checks at the smallest rate.
pub fn report(
    spec: &DiffusionSpec,
    rates: &[DiscountRate],
    simulation: SimulationConfig,
) -> Result<ReportDoc> {
    let table = full_report(spec, rates)?;
    let r = table.rates[0];
    let req = |side| VerifyRequest {
        side,
        r,
        s: None,
        simulation,
        profile_points: 0,
    };
    let alpha = verify(spec, &req(Side::Alpha))?;
    let beta = verify(spec, &req(Side::Beta))?;
    let ss = derive_scale_speed(spec)?;
    let sim = Simulator::with_absorbing(
        spec,
        simulation,
        table.alpha.class.kind == crate::boundary::BoundaryKind::Accessible,
        table.beta.class.kind == crate::boundary::BoundaryKind::Accessible,
    )?;
    let deficit = scale_deficit_with(&sim, &ss)?;
    let expected = table.scale_process.verdict;
    let agrees = scale_outcome_matches(&deficit, expected);
    Ok(ReportDoc {
        table,
        alpha,
        beta,
        scale_process: ScaleCheck {
            deficit,
            expected,
            agrees,
        },
    })
}
