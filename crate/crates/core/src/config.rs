//! Run configuration: which diffusion, which rates, how to simulate.
//!
//! ```json
//! {
//!   "diffusion": { "family": "bessel", "params": { "delta": 3 } },
//!   "rates": [0.5, 1.0],
//!   "simulation": { "horizon": 1.0, "step": 0.001, "paths": 100000, "seed": 7 }
//! }
//! ```
//!
//! A custom diffusion gives `drift`, `volatility` (expressions in `x`),
//! `interval` and `x0` instead of `family`.

use crate::diffusion::{catalog, custom, DiffusionSpec, IntervalSpec};
use crate::error::{Error, Result};
use crate::excessive::DiscountRate;
use crate::mc::SimulationConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalConfig {
    #[serde(with = "crate::report::ext")]
    pub alpha: f64,
    #[serde(with = "crate::report::ext")]
    pub beta: f64,
    #[serde(default)]
    pub alpha_included: bool,
    #[serde(default)]
    pub beta_included: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volatility: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<IntervalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
}

impl DiffusionConfig {
    pub fn family(name: &str, params: &[(&str, f64)]) -> Self {
        Self {
            family: Some(name.into()),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            ..Self::default()
        }
    }

    pub fn build(&self) -> Result<DiffusionSpec> {
        if let Some(family) = &self.family {
            if let Some(field) = [
                ("drift", self.drift.is_some()),
                ("volatility", self.volatility.is_some()),
                ("interval", self.interval.is_some()),
            ]
            .iter()
            .find(|f| f.1)
            {
                return Err(Error::Config(format!(
                    "diffusion.{} cannot be combined with diffusion.family",
                    field.0
                )));
            }
            let mut params = self.params.clone();
            if let Some(x0) = self.x0 {
                params.insert("x0".into(), x0);
            }
            return catalog(family, &params);
        }
        if !self.params.is_empty() {
            return Err(Error::Config(
                "diffusion.params needs diffusion.family".into(),
            ));
        }
        let missing = |name: &str| Error::Config(format!("missing field `diffusion.{name}`"));
        let drift = self.drift.as_deref().ok_or_else(|| missing("drift"))?;
        let volatility = self
            .volatility
            .as_deref()
            .ok_or_else(|| missing("volatility"))?;
        let iv = self.interval.as_ref().ok_or_else(|| missing("interval"))?;
        let x0 = self.x0.ok_or_else(|| missing("x0"))?;
        let interval = IntervalSpec::new(iv.alpha, iv.beta, iv.alpha_included, iv.beta_included)?;
        custom(interval, drift, volatility, x0)
    }
}

/// Simulation settings; missing fields take the defaults below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    /// Defaults to the diffusion's reference point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<f64>,
    pub horizon: f64,
    pub step: f64,
    pub paths: usize,
    pub seed: u64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            initial_state: None,
            horizon: 1.0,
            step: 1e-3,
            paths: 100_000,
            seed: 20_240_601,
        }
    }
}

impl SimulationSection {
    pub fn resolve(&self, spec: &DiffusionSpec) -> Result<SimulationConfig> {
        SimulationConfig::new(
            self.initial_state.unwrap_or(spec.reference_point),
            self.horizon,
            self.step,
            self.paths,
            self.seed,
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Emit JSON instead of text.
    pub json: bool,
    /// Where CSV tables go; standard output when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub diffusion: DiffusionConfig,
    #[serde(default = "default_rates")]
    pub rates: Vec<f64>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_rates() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

impl RunConfig {
    pub fn new(diffusion: DiffusionConfig) -> Self {
        Self {
            diffusion,
            rates: default_rates(),
            simulation: SimulationSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// At least one rate; all finite, positive and distinct. Returned sorted.
    pub fn discount_rates(&self) -> Result<Vec<DiscountRate>> {
        if self.rates.is_empty() {
            return Err(Error::Config(
                "`rates` must list at least one discount rate".into(),
            ));
        }
        let mut rates = self
            .rates
            .iter()
            .map(|&r| DiscountRate::new(r))
            .collect::<Result<Vec<_>>>()?;
        rates.sort_by(|a, b| a.value().total_cmp(&b.value()));
        if rates.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("`rates` must be distinct".into()));
        }
        Ok(rates)
    }

    /// Builds everything the run needs, reporting the first invalid field.
    pub fn validate(&self) -> Result<(DiffusionSpec, Vec<DiscountRate>, SimulationConfig)> {
        let spec = self.diffusion.build()?;
        let rates = self.discount_rates()?;
        let sim = self.simulation.resolve(&spec)?;
        Ok((spec, rates, sim))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_config_with_defaults() {
        let cfg =
            RunConfig::from_json(r#"{"diffusion": {"family": "bessel", "params": {"delta": 3}}}"#)
                .unwrap();
        let (spec, rates, sim) = cfg.validate().unwrap();
        assert_eq!(spec.reference_point, 1.0);
        assert_eq!(rates.len(), 3);
        assert_eq!(sim.initial_state, 1.0);
    }

    #[test]
    fn custom_config_missing_volatility_names_the_field() {
        let cfg = RunConfig::from_json(
            r#"{"diffusion": {"drift": "1/x", "interval": {"alpha": 0, "beta": "inf"}, "x0": 1}}"#,
        )
        .unwrap();
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("diffusion.volatility"), "{err}");
    }

    #[test]
    fn rates_are_checked() {
        let mut cfg = RunConfig::new(DiffusionConfig::family("brownian", &[]));
        cfg.rates = vec![];
        assert!(cfg.validate().is_err());
        cfg.rates = vec![0.5, 0.5];
        assert!(cfg.validate().is_err());
        cfg.rates = vec![1.0, -1.0];
        assert!(cfg.validate().is_err());
        cfg.rates = vec![1.0, 0.5];
        let (_, rates, _) = cfg.validate().unwrap();
        assert_eq!(rates[0].value(), 0.5);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err =
            RunConfig::from_json(r#"{"diffusion": {"family": "ou"}, "rate": [1]}"#).unwrap_err();
        assert!(err.to_string().contains("rate"), "{err}");
    }

    #[test]
    fn round_trips() {
        let mut cfg = RunConfig::new(DiffusionConfig {
            drift: Some("1/x".into()),
            volatility: Some("1".into()),
            interval: Some(IntervalConfig {
                alpha: 0.0,
                beta: f64::INFINITY,
                ..Default::default()
            }),
            x0: Some(1.0),
            ..Default::default()
        });
        cfg.simulation.initial_state = Some(2.0);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }
}
