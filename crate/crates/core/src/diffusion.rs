//! One-dimensional regular diffusions: state interval, coefficients and the
//! catalog of families with known boundary behaviour.

use crate::error::{Error, Result};
use crate::expr::Expr;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Which endpoint of the state interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Alpha,
    Beta,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Alpha => Side::Beta,
            Side::Beta => Side::Alpha,
        }
    }

    /// +1 when moving toward this endpoint increases x.
    pub fn direction(self) -> f64 {
        match self {
            Side::Alpha => -1.0,
            Side::Beta => 1.0,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Side::Alpha => "alpha",
            Side::Beta => "beta",
        })
    }
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" | "a" | "lower" => Ok(Side::Alpha),
            "beta" | "b" | "upper" => Ok(Side::Beta),
            other => Err(Error::Config(format!(
                "unknown side `{other}` (expected alpha or beta)"
            ))),
        }
    }
}

/// The state interval with endpoints `alpha < beta` on the extended real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_included: bool,
    pub beta_included: bool,
}

impl IntervalSpec {
    pub fn new(alpha: f64, beta: f64, alpha_included: bool, beta_included: bool) -> Result<Self> {
        if alpha.is_nan() || beta.is_nan() || alpha >= beta {
            return Err(Error::InvalidSpec(format!(
                "interval endpoints must satisfy alpha < beta, got [{alpha}, {beta}]"
            )));
        }
        if (alpha_included && !alpha.is_finite()) || (beta_included && !beta.is_finite()) {
            return Err(Error::InvalidSpec(
                "an infinite endpoint cannot be included".into(),
            ));
        }
        Ok(Self {
            alpha,
            beta,
            alpha_included,
            beta_included,
        })
    }

    pub fn open(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, false, false)
    }

    pub fn endpoint(&self, side: Side) -> f64 {
        match side {
            Side::Alpha => self.alpha,
            Side::Beta => self.beta,
        }
    }

    pub fn contains_interior(&self, x: f64) -> bool {
        x > self.alpha && x < self.beta
    }
}

/// A coefficient function on the open interval.
#[derive(Clone)]
pub struct Coefficient {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    description: String,
}

impl Coefficient {
    pub fn new(
        description: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            description: description.into(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), move |_| c)
    }

    pub fn from_expr(expr: Expr) -> Self {
        let description = expr.source().to_string();
        Self::new(description, move |x| expr.eval(x))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Coefficient({})", self.description)
    }
}

/// Where a [`DiffusionSpec`] came from; used for reports and round-tripping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpecSource {
    Catalog {
        family: String,
        params: BTreeMap<String, f64>,
    },
    Custom {
        drift: String,
        volatility: String,
    },
    Native,
}

/// dX = drift(X) dt + volatility(X) dW on an interval.
#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    pub interval: IntervalSpec,
    pub drift: Coefficient,
    pub volatility: Coefficient,
    pub reference_point: f64,
    pub source: SpecSource,
}

impl DiffusionSpec {
    /// Builds a spec and checks regularity at a spread of interior points.
    pub fn new(
        interval: IntervalSpec,
        drift: Coefficient,
        volatility: Coefficient,
        reference_point: f64,
    ) -> Result<Self> {
        let spec = Self {
            interval,
            drift,
            volatility,
            reference_point,
            source: SpecSource::Native,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_source(mut self, source: SpecSource) -> Self {
        self.source = source;
        self
    }

    fn validate(&self) -> Result<()> {
        let x0 = self.reference_point;
        if !self.interval.contains_interior(x0) {
            return Err(Error::InvalidSpec(format!(
                "reference point {x0} is not interior to ]{}, {}[",
                self.interval.alpha, self.interval.beta
            )));
        }
        for x in self.probe_points() {
            let (b, s) = (self.drift.eval(x), self.volatility.eval(x));
            if !b.is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "drift is not finite at x = {x}"
                )));
            }
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "volatility must be finite and strictly positive, got {s} at x = {x}"
                )));
            }
        }
        Ok(())
    }

    /// Interior points spread geometrically toward both endpoints.
    fn probe_points(&self) -> Vec<f64> {
        let x0 = self.reference_point;
        let mut pts = vec![x0];
        for side in [Side::Alpha, Side::Beta] {
            let e = self.interval.endpoint(side);
            for k in 1..=24 {
                let d = 0.5f64.powi(k);
                let x = if e.is_finite() {
                    e + (x0 - e) * d
                } else {
                    x0 + side.direction() * (1.0 / d - 1.0)
                };
                if self.interval.contains_interior(x) {
                    pts.push(x);
                }
            }
        }
        pts
    }

    #[inline]
    pub fn drift_at(&self, x: f64) -> f64 {
        self.drift.eval(x)
    }

    #[inline]
    pub fn volatility_at(&self, x: f64) -> f64 {
        self.volatility.eval(x)
    }

    /// Short human-readable name.
    pub fn label(&self) -> String {
        match &self.source {
            SpecSource::Catalog { family, params } => {
                if params.is_empty() {
                    family.clone()
                } else {
                    let ps: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    format!("{family}({})", ps.join(", "))
                }
            }
            SpecSource::Custom { drift, volatility } => {
                format!("custom(drift={drift}, volatility={volatility})")
            }
            SpecSource::Native => format!(
                "diffusion(drift={}, volatility={})",
                self.drift.description(),
                self.volatility.description()
            ),
        }
    }
}

/// Names accepted by [`catalog`].
pub const FAMILIES: [&str; 5] = ["brownian", "gbm", "bessel", "cir", "ou"];

fn param(
    family: &str,
    params: &BTreeMap<String, f64>,
    name: &str,
    default: Option<f64>,
) -> Result<f64> {
    match params.get(name).copied().or(default) {
        Some(v) if v.is_finite() => Ok(v),
        Some(v) => Err(Error::BadParameter {
            family: family.into(),
            name: name.into(),
            problem: format!("must be finite, got {v}"),
        }),
        None => Err(Error::BadParameter {
            family: family.into(),
            name: name.into(),
            problem: "is missing".into(),
        }),
    }
}

fn positive(family: &str, name: &str, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::BadParameter {
            family: family.into(),
            name: name.into(),
            problem: format!("must be > 0, got {v}"),
        })
    }
}

/// Builds a diffusion from the named family.
///
/// | family   | drift          | volatility | interval  | params              |
/// |----------|----------------|------------|-----------|---------------------|
/// | brownian | mu             | sigma      | ]-inf,inf[| mu=0, sigma=1       |
/// | gbm      | mu x           | sigma x    | ]0,inf[   | mu, sigma           |
/// | bessel   | (delta-1)/(2x) | 1          | ]0,inf[   | delta               |
/// | cir      | kappa(theta-x) | sigma sqrt x | ]0,inf[ | kappa, theta, sigma |
/// | ou       | kappa(theta-x) | sigma      | ]-inf,inf[| kappa, theta=0, sigma=1 |
///
/// Every family also accepts `x0` to override the reference point.
pub fn catalog(name: &str, params: &BTreeMap<String, f64>) -> Result<DiffusionSpec> {
    let known: &[&str] = match name {
        "brownian" => &["mu", "sigma", "x0"],
        "gbm" => &["mu", "sigma", "x0"],
        "bessel" => &["delta", "x0"],
        "cir" => &["kappa", "theta", "sigma", "x0"],
        "ou" => &["kappa", "theta", "sigma", "x0"],
        other => return Err(Error::UnknownFamily(other.to_string())),
    };
    if let Some(extra) = params.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(Error::BadParameter {
            family: name.into(),
            name: extra.clone(),
            problem: format!("is not a parameter of this family (expected one of {known:?})"),
        });
    }
    let inf = f64::INFINITY;
    let spec = match name {
        "brownian" => {
            let mu = param(name, params, "mu", Some(0.0))?;
            let sigma = positive(name, "sigma", param(name, params, "sigma", Some(1.0))?)?;
            let x0 = param(name, params, "x0", Some(0.0))?;
            DiffusionSpec::new(
                IntervalSpec::open(-inf, inf)?,
                Coefficient::new(format!("{mu}"), move |_| mu),
                Coefficient::new(format!("{sigma}"), move |_| sigma),
                x0,
            )?
        }
        "gbm" => {
            let mu = param(name, params, "mu", None)?;
            let sigma = positive(name, "sigma", param(name, params, "sigma", None)?)?;
            let x0 = param(name, params, "x0", Some(1.0))?;
            DiffusionSpec::new(
                IntervalSpec::open(0.0, inf)?,
                Coefficient::new(format!("{mu}*x"), move |x| mu * x),
                Coefficient::new(format!("{sigma}*x"), move |x| sigma * x),
                x0,
            )?
        }
        "bessel" => {
            let delta = positive(name, "delta", param(name, params, "delta", None)?)?;
            let x0 = param(name, params, "x0", Some(1.0))?;
            let c = 0.5 * (delta - 1.0);
            DiffusionSpec::new(
                IntervalSpec::open(0.0, inf)?,
                Coefficient::new(format!("({delta}-1)/(2*x)"), move |x| c / x),
                Coefficient::constant(1.0),
                x0,
            )?
        }
        "cir" => {
            let kappa = positive(name, "kappa", param(name, params, "kappa", None)?)?;
            let theta = positive(name, "theta", param(name, params, "theta", None)?)?;
            let sigma = positive(name, "sigma", param(name, params, "sigma", None)?)?;
            let x0 = param(name, params, "x0", Some(1.0))?;
            DiffusionSpec::new(
                IntervalSpec::open(0.0, inf)?,
                Coefficient::new(format!("{kappa}*({theta}-x)"), move |x| kappa * (theta - x)),
                Coefficient::new(format!("{sigma}*sqrt(x)"), move |x| sigma * x.sqrt()),
                x0,
            )?
        }
        "ou" => {
            let kappa = positive(name, "kappa", param(name, params, "kappa", None)?)?;
            let theta = param(name, params, "theta", Some(0.0))?;
            let sigma = positive(name, "sigma", param(name, params, "sigma", Some(1.0))?)?;
            let x0 = param(name, params, "x0", Some(theta))?;
            DiffusionSpec::new(
                IntervalSpec::open(-inf, inf)?,
                Coefficient::new(format!("{kappa}*({theta}-x)"), move |x| kappa * (theta - x)),
                Coefficient::new(format!("{sigma}"), move |_| sigma),
                x0,
            )?
        }
        _ => unreachable!(),
    };
    Ok(spec.with_source(SpecSource::Catalog {
        family: name.to_string(),
        params: params.clone(),
    }))
}

/// Convenience: `catalog` with inline `(name, value)` pairs.
pub fn catalog_with(name: &str, params: &[(&str, f64)]) -> Result<DiffusionSpec> {
    let map = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    catalog(name, &map)
}

/// Builds a diffusion from expression strings in the variable `x`.
pub fn custom(
    interval: IntervalSpec,
    drift: &str,
    volatility: &str,
    reference_point: f64,
) -> Result<DiffusionSpec> {
    let d = Expr::parse(drift)?;
    let v = Expr::parse(volatility)?;
    Ok(DiffusionSpec::new(
        interval,
        Coefficient::from_expr(d),
        Coefficient::from_expr(v),
        reference_point,
    )?
    .with_source(SpecSource::Custom {
        drift: drift.to_string(),
        volatility: volatility.to_string(),
    }))
}
