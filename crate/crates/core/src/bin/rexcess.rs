use clap::{Args, Parser, Subcommand};
use rexcess::config::{DiffusionConfig, IntervalConfig, RunConfig};
use rexcess::excessive::{Direction, DiscountRate};
use rexcess::pipeline::{self, VerifyRequest};
use rexcess::report;
use rexcess::{Error, Result, Side};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

/// Boundary classification, excessive functions and martingale checks for
/// one-dimensional diffusions.
///
/// Exit status: 0 success, 1 bad configuration, 2 inconclusive diagnostics,
/// 3 numerical failure.
#[derive(Parser, Debug)]
#[command(name = "rexcess", version)]
struct Cli {
    #[command(flatten)]
    source: Source,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Source {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Catalog family: brownian, gbm, bessel, cir, ou.
    #[arg(long, global = true)]
    family: Option<String>,
    /// Family parameter as name=value (repeatable).
    #[arg(long = "param", global = true, value_parser = parse_param)]
    params: Vec<(String, f64)>,
    /// Drift expression in x (custom diffusion).
    #[arg(long, global = true)]
    drift: Option<String>,
    /// Volatility expression in x (custom diffusion).
    #[arg(long, global = true)]
    volatility: Option<String>,
    /// Lower endpoint (custom diffusion; "-inf" allowed).
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Upper endpoint (custom diffusion; "inf" allowed).
    #[arg(long, global = true, allow_hyphen_values = true)]
    beta: Option<f64>,
    /// Reference point where solutions are normalized.
    #[arg(long = "ref", global = true, allow_hyphen_values = true)]
    reference: Option<f64>,
    /// Discount rate (repeatable; replaces the configured list).
    #[arg(long = "rate", global = true)]
    rates: Vec<f64>,
    /// Emit JSON.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify both endpoints with the Feller integrals.
    Classify,
    /// Solve for psi_r or phi_r and write CSV (x, p(x), value, dvalue_dp).
    Solve {
        /// Discount rate (default: the smallest configured rate).
        #[arg(long)]
        r: Option<f64>,
        /// psi (increasing) or phi (decreasing).
        #[arg(long, default_value = "psi")]
        function: Direction,
        /// Write ln value and ln |dvalue_dp| instead.
        #[arg(long)]
        log_space: bool,
        /// CSV destination (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Limit diagnostics at both endpoints for the configured rates.
    Table,
    /// Martingale verdicts from the classification.
    Verdict,
    /// Monte Carlo check of the martingale property.
    Verify(VerifyArgs),
    /// Classification, table, verdicts and Monte Carlo checks in one document.
    Report,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    r: Option<f64>,
    /// Larger rate for the ratio identity check.
    #[arg(long)]
    s: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "beta")]
    side: Side,
    /// Write per-time deficits as CSV (t, deficit, half_width).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Number of profile times when writing CSV.
    #[arg(long, default_value_t = 8)]
    profile_points: usize,
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|e| format!("parameter `{k}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

impl Source {
    fn run_config(&self) -> Result<RunConfig> {
        let inline = self.family.is_some() || self.drift.is_some() || self.volatility.is_some();
        let mut cfg = match (&self.config, inline) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, true) => RunConfig::new(DiffusionConfig::default()),
            (None, false) => {
                return Err(Error::Config(
                    "no diffusion given: use --config, --family, or --drift/--volatility".into(),
                ))
            }
        };
        if inline {
            let d = &mut cfg.diffusion;
            if self.family.is_some() {
                *d = DiffusionConfig::default();
                d.family = self.family.clone();
            }
            if self.drift.is_some() || self.volatility.is_some() {
                d.family = None;
                d.params.clear();
                d.drift = self.drift.clone().or(d.drift.take());
                d.volatility = self.volatility.clone().or(d.volatility.take());
            }
        }
        for (k, v) in &self.params {
            cfg.diffusion.params.insert(k.clone(), *v);
        }
        if self.alpha.is_some() || self.beta.is_some() {
            let iv = cfg.diffusion.interval.get_or_insert(IntervalConfig {
                alpha: f64::NEG_INFINITY,
                beta: f64::INFINITY,
                ..Default::default()
            });
            if let Some(a) = self.alpha {
                iv.alpha = a;
            }
            if let Some(b) = self.beta {
                iv.beta = b;
            }
        }
        if self.reference.is_some() {
            cfg.diffusion.x0 = self.reference;
        }
        if !self.rates.is_empty() {
            cfg.rates = self.rates.clone();
        }
        cfg.output.json |= self.json;
        Ok(cfg)
    }
}

fn emit<T: Serialize>(json: bool, doc: &T, text: impl FnOnce(&T) -> String) -> Result<()> {
    if json {
        let s = serde_json::to_string_pretty(doc).map_err(|e| Error::Config(e.to_string()))?;
        println!("{s}");
    } else {
        print!("{}", text(doc));
    }
    Ok(())
}

fn write_csv(path: Option<&PathBuf>, csv: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, csv)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.source.run_config()?;
    let (spec, rates, simulation) = cfg.validate()?;
    let json = cfg.output.json;
    let rate = |r: Option<f64>| r.map_or(Ok(rates[0]), DiscountRate::new);
    match &cli.command {
        Command::Classify => emit(json, &pipeline::classify(&spec)?, report::render_classify),
        Command::Solve {
            r,
            function,
            log_space,
            out,
        } => {
            let doc = pipeline::solve(&spec, rate(*r)?, *function, *log_space)?;
            if json {
                emit(true, &doc, |_| String::new())
            } else {
                write_csv(out.as_ref().or(cfg.output.csv.as_ref()), &doc.to_csv())
            }
        }
        Command::Table => {
            let doc = pipeline::table(&spec, &rates)?;
            emit(json, &doc, report::render_table)?;
            if doc.alpha.concordant == Some(false) || doc.beta.concordant == Some(false) {
                return Err(Error::inconclusive(
                    "limit table",
                    "rows disagree on the boundary column",
                ));
            }
            Ok(())
        }
        Command::Verdict => emit(json, &pipeline::verdicts(&spec)?, report::render_verdicts),
        Command::Verify(v) => {
            let mut sim = simulation;
            if let Some(x) = v.x0 {
                sim.initial_state = x;
            }
            if let Some(t) = v.t {
                sim.horizon = t;
            }
            if let Some(dt) = v.dt {
                sim.step = dt;
            }
            if let Some(n) = v.paths {
                sim.paths = n;
            }
            if let Some(seed) = v.seed {
                sim.seed = seed;
            }
            sim.validate()?;
            let csv = v.csv.as_ref().or(cfg.output.csv.as_ref());
            let req = VerifyRequest {
                side: v.side,
                r: rate(v.r)?,
                s: v.s.map(DiscountRate::new).transpose()?,
                simulation: sim,
                profile_points: if csv.is_some() { v.profile_points } else { 0 },
            };
            let doc = pipeline::verify(&spec, &req)?;
            if let Some(path) = csv {
                write_csv(Some(path), &doc.profile_csv())?;
            }
            emit(json, &doc, report::render_verify)?;
            if doc.outcome == rexcess::mc::DeficitVerdict::Inconclusive {
                return Err(Error::inconclusive(
                    "deficit test",
                    "the deficit is significantly negative",
                ));
            }
            Ok(())
        }
        Command::Report => {
            let doc = pipeline::report(&spec, &rates, simulation)?;
            emit(json, &doc, report::render_report)?;
            if !doc.all_agree() {
                return Err(Error::inconclusive(
                    "report",
                    "a Monte Carlo check disagrees with the analytic verdict",
                ));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rexcess: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
