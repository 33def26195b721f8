//! C interface to `rexcess`.
//!
//! Every function returns a [`RexStatus`]; on failure the message is kept per
//! thread and read with [`rex_last_error`]. Handles are opaque and owned by
//! the caller until passed to the matching `*_free` function. Panics never
//! cross the boundary: they come back as `REX_STATUS_PANIC`.

use rexcess::boundary::{classify_both, BoundaryKind};
use rexcess::config::{DiffusionConfig, RunConfig};
use rexcess::excessive::ExcessiveFunction;
use rexcess::martingale::{direction_for, Verdict};
use rexcess::mc::{martingale_deficit_with, scale_deficit_with, SimulationConfig, Simulator};
use rexcess::{
    derive_scale_speed, pipeline, solve_excessive, DiffusionSpec, Direction, DiscountRate, Error,
    GridSpec, Side,
};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Result of every call. The first four match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RexStatus {
    Ok = 0,
    /// Invalid input: configuration, parameters, expressions.
    Config = 1,
    /// A diagnostic could not reach a conclusion.
    Inconclusive = 2,
    /// Quadrature, solver or simulation failure.
    Numerical = 3,
    NullPointer = 4,
    /// A string argument is not valid UTF-8.
    InvalidUtf8 = 5,
    /// A caller buffer is too small; the required length is reported.
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RexBoundaryKind {
    Accessible = 0,
    Natural = 1,
    Entrance = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RexVerdict {
    Martingale = 0,
    StrictLocalMartingale = 1,
    DegenerateZero = 2,
    Supermartingale = 3,
    Submartingale = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RexSide {
    Alpha = 0,
    Beta = 1,
}

/// `Increasing` is psi_r, `Decreasing` is phi_r.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RexDirection {
    Increasing = 0,
    Decreasing = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RexSimulation {
    pub initial_state: f64,
    pub horizon: f64,
    pub step: f64,
    pub paths: u64,
    pub seed: u64,
}

/// Mean with a 99% confidence half-width.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RexEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub n_effective: u64,
}

/// A validated diffusion.
pub struct RexDiffusion {
    spec: DiffusionSpec,
}

/// A solved psi_r or phi_r on its grid.
pub struct RexExcessive {
    f: ExcessiveFunction,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(RexStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            1 => RexStatus::Config,
            2 => RexStatus::Inconclusive,
            _ => RexStatus::Numerical,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RexStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `body`, recording any failure or panic.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> RexStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RexStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            RexStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(RexStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn side(s: RexSide) -> Side {
    match s {
        RexSide::Alpha => Side::Alpha,
        RexSide::Beta => Side::Beta,
    }
}

fn kind(k: BoundaryKind) -> RexBoundaryKind {
    match k {
        BoundaryKind::Accessible => RexBoundaryKind::Accessible,
        BoundaryKind::InaccessibleNatural => RexBoundaryKind::Natural,
        BoundaryKind::InaccessibleEntrance => RexBoundaryKind::Entrance,
    }
}

fn verdict(v: Verdict) -> RexVerdict {
    match v {
        Verdict::Martingale => RexVerdict::Martingale,
        Verdict::StrictLocalMartingale => RexVerdict::StrictLocalMartingale,
        Verdict::DegenerateZero => RexVerdict::DegenerateZero,
        Verdict::Supermartingale => RexVerdict::Supermartingale,
        Verdict::Submartingale => RexVerdict::Submartingale,
    }
}

fn simulation(s: &RexSimulation) -> Result<SimulationConfig, Fail> {
    let paths = usize::try_from(s.paths)
        .map_err(|_| Fail(RexStatus::Config, "paths does not fit in usize".into()))?;
    Ok(SimulationConfig::new(
        s.initial_state,
        s.horizon,
        s.step,
        paths,
        s.seed,
    )?)
}

fn estimate(e: &rexcess::EstimateWithCI) -> RexEstimate {
    RexEstimate {
        mean: e.mean,
        half_width: e.half_width,
        n_effective: e.n_effective as u64,
    }
}

fn absorbing_simulator(spec: &DiffusionSpec, cfg: SimulationConfig) -> Result<Simulator<'_>, Fail> {
    let (a, b) = classify_both(&derive_scale_speed(spec)?)?;
    Ok(Simulator::with_absorbing(
        spec,
        cfg,
        a.kind == BoundaryKind::Accessible,
        b.kind == BoundaryKind::Accessible,
    )?)
}

fn box_out<T>(value: T, out: *mut *mut T) {
    // SAFETY: callers check `out` before building `value`.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// The message of the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn rex_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a catalog diffusion (`brownian`, `gbm`, `bessel`, `cir`, `ou`)
/// from `n` named parameters. `names` and `values` may be null when `n` is 0.
///
/// # Safety
/// `family` is a NUL-terminated string; `names` and `values` point to `n`
/// entries; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rex_diffusion_from_family(
    family: *const c_char,
    names: *const *const c_char,
    values: *const f64,
    n: usize,
    out: *mut *mut RexDiffusion,
) -> RexStatus {
    guard(|| {
        out.as_mut().ok_or_else(|| null("out"))?;
        let family = str_arg(family, "family")?;
        let mut params = Vec::with_capacity(n);
        if n > 0 {
            if names.is_null() || values.is_null() {
                return Err(null("names/values"));
            }
            for i in 0..n {
                let name = str_arg(*names.add(i), "names[i]")?;
                params.push((name, *values.add(i)));
            }
        }
        let spec = DiffusionConfig::family(family, &params).build()?;
        box_out(RexDiffusion { spec }, out);
        Ok(())
    })
}

/// Builds a diffusion from a JSON run configuration, or from its
/// `diffusion` section alone.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rex_diffusion_from_json(
    json: *const c_char,
    out: *mut *mut RexDiffusion,
) -> RexStatus {
    guard(|| {
        out.as_mut().ok_or_else(|| null("out"))?;
        let text = str_arg(json, "json")?;
        let spec = match RunConfig::from_json(text) {
            Ok(cfg) => cfg.diffusion.build()?,
            Err(run_err) => match serde_json::from_str::<DiffusionConfig>(text) {
                Ok(d) => d.build()?,
                Err(_) => return Err(run_err.into()),
            },
        };
        box_out(RexDiffusion { spec }, out);
        Ok(())
    })
}

/// # Safety
/// `d` is null or came from a `rex_diffusion_*` constructor and is not used again.
#[no_mangle]
pub unsafe extern "C" fn rex_diffusion_free(d: *mut RexDiffusion) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// The reference point where solutions are normalized and simulations start
/// by default.
///
/// # Safety
/// `d` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rex_diffusion_reference_point(
    d: *const RexDiffusion,
    out: *mut f64,
) -> RexStatus {
    guard(|| {
        *self::out(out, "out")? = obj(d, "d")?.spec.reference_point;
        Ok(())
    })
}

/// # Safety
/// `d` is a live handle; `alpha` and `beta` are writable.
#[no_mangle]
pub unsafe extern "C" fn rex_classify(
    d: *const RexDiffusion,
    alpha: *mut RexBoundaryKind,
    beta: *mut RexBoundaryKind,
) -> RexStatus {
    guard(|| {
        let d = obj(d, "d")?;
        let (a_out, b_out) = (out(alpha, "alpha")?, out(beta, "beta")?);
        let (a, b) = classify_both(&derive_scale_speed(&d.spec)?)?;
        *a_out = kind(a.kind);
        *b_out = kind(b.kind);
        Ok(())
    })
}

/// Martingale verdicts at both endpoints and for the scale process.
///
/// # Safety
/// `d` is a live handle; the three outputs are writable.
#[no_mangle]
pub unsafe extern "C" fn rex_verdicts(
    d: *const RexDiffusion,
    alpha: *mut RexVerdict,
    beta: *mut RexVerdict,
    scale_process: *mut RexVerdict,
) -> RexStatus {
    guard(|| {
        let d = obj(d, "d")?;
        let (a_out, b_out, s_out) = (
            out(alpha, "alpha")?,
            out(beta, "beta")?,
            out(scale_process, "scale_process")?,
        );
        let doc = pipeline::verdicts(&d.spec)?;
        *a_out = verdict(doc.alpha.verdict);
        *b_out = verdict(doc.beta.verdict);
        *s_out = verdict(doc.scale_process.verdict);
        Ok(())
    })
}

/// Solves for psi_r or phi_r, normalized to 1 at the reference point.
///
/// # Safety
/// `d` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rex_solve(
    d: *const RexDiffusion,
    r: f64,
    direction: RexDirection,
    out: *mut *mut RexExcessive,
) -> RexStatus {
    guard(|| {
        let d = obj(d, "d")?;
        out.as_mut().ok_or_else(|| null("out"))?;
        let direction = match direction {
            RexDirection::Increasing => Direction::Increasing,
            RexDirection::Decreasing => Direction::Decreasing,
        };
        let ss = derive_scale_speed(&d.spec)?;
        let f = solve_excessive(&ss, DiscountRate::new(r)?, direction, &GridSpec::default())?;
        box_out(RexExcessive { f }, out);
        Ok(())
    })
}

/// # Safety
/// `f` is null or came from [`rex_solve`] and is not used again.
#[no_mangle]
pub unsafe extern "C" fn rex_excessive_free(f: *mut RexExcessive) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Number of grid nodes.
///
/// # Safety
/// `f` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rex_excessive_len(f: *const RexExcessive, out: *mut usize) -> RexStatus {
    guard(|| {
        *self::out(out, "out")? = obj(f, "f")?.f.len();
        Ok(())
    })
}

/// Copies grid nodes and `ln f` at the nodes. With `capacity` below the
/// node count nothing is copied, `len` receives the count and the status
/// is `REX_STATUS_BUFFER_TOO_SMALL`.
///
/// # Safety
/// `f` is a live handle; `x` and `log_value` hold `capacity` doubles; `len`
/// is writable.
#[no_mangle]
pub unsafe extern "C" fn rex_excessive_nodes(
    f: *const RexExcessive,
    x: *mut f64,
    log_value: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> RexStatus {
    guard(|| {
        let f = &obj(f, "f")?.f;
        let len = out(len, "len")?;
        *len = f.len();
        if capacity < f.len() {
            return Err(Fail(
                RexStatus::BufferTooSmall,
                format!("{} nodes, capacity {capacity}", f.len()),
            ));
        }
        if x.is_null() || log_value.is_null() {
            return Err(null("x/log_value"));
        }
        ptr::copy_nonoverlapping(f.grid.as_ptr(), x, f.len());
        ptr::copy_nonoverlapping(f.log_values.as_ptr(), log_value, f.len());
        Ok(())
    })
}

/// `f(x)` by interpolation; `x` must lie inside the grid hull.
///
/// # Safety
/// `f` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rex_excessive_eval(
    f: *const RexExcessive,
    x: f64,
    out: *mut f64,
) -> RexStatus {
    guard(|| {
        let f = &obj(f, "f")?.f;
        let o = self::out(out, "out")?;
        *o = f.evaluate(x)?;
        Ok(())
    })
}

/// Monte Carlo estimate of `f(x) - E_x[e^{-r(t∧T)} f(X_{t∧T})]`, with `f`
/// the solution that is recessive at `side` (phi at alpha, psi at beta).
///
/// # Safety
/// `d` is a live handle; `sim` is readable; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rex_martingale_deficit(
    d: *const RexDiffusion,
    side: RexSide,
    r: f64,
    sim: *const RexSimulation,
    out: *mut RexEstimate,
) -> RexStatus {
    guard(|| {
        let d = obj(d, "d")?;
        let cfg = simulation(obj(sim, "sim")?)?;
        let o = self::out(out, "out")?;
        let ss = derive_scale_speed(&d.spec)?;
        let f = solve_excessive(
            &ss,
            DiscountRate::new(r)?,
            direction_for(self::side(side)),
            &GridSpec::default(),
        )?;
        let sim = absorbing_simulator(&d.spec, cfg)?;
        *o = estimate(&martingale_deficit_with(&sim, &f)?);
        Ok(())
    })
}

/// Monte Carlo estimate of `p(x) - E_x[p(X_t)]` for the scale process.
///
/// # Safety
/// `d` is a live handle; `sim` is readable; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rex_scale_deficit(
    d: *const RexDiffusion,
    sim: *const RexSimulation,
    out: *mut RexEstimate,
) -> RexStatus {
    guard(|| {
        let d = obj(d, "d")?;
        let cfg = simulation(obj(sim, "sim")?)?;
        let o = self::out(out, "out")?;
        let ss = derive_scale_speed(&d.spec)?;
        let sim = absorbing_simulator(&d.spec, cfg)?;
        *o = estimate(&scale_deficit_with(&sim, &ss)?);
        Ok(())
    })
}

/// The full limit table with verdicts as a JSON document, to be released
/// with [`rex_string_free`].
///
/// # Safety
/// `d` is a live handle; `rates` holds `n` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rex_table_json(
    d: *const RexDiffusion,
    rates: *const f64,
    n: usize,
    out: *mut *mut c_char,
) -> RexStatus {
    guard(|| {
        let d = obj(d, "d")?;
        out.as_mut().ok_or_else(|| null("out"))?;
        if rates.is_null() {
            return Err(null("rates"));
        }
        let mut cfg = RunConfig::new(DiffusionConfig::default());
        cfg.rates = std::slice::from_raw_parts(rates, n).to_vec();
        let rates = cfg.discount_rates()?;
        let doc = pipeline::table(&d.spec, &rates)?;
        let text = serde_json::to_string_pretty(&doc)
            .map_err(|e| Fail(RexStatus::Numerical, e.to_string()))?;
        *out = CString::new(text)
            .map_err(|e| Fail(RexStatus::Numerical, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` is null or came from this library and is not used again.
#[no_mangle]
pub unsafe extern "C" fn rex_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
