use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid diffusion: {0}")]
    InvalidSpec(String),

    #[error("unknown diffusion family `{0}` (expected brownian, gbm, bessel, cir or ou)")]
    UnknownFamily(String),

    #[error("family `{family}`: parameter `{name}` {problem}")]
    BadParameter {
        family: String,
        name: String,
        problem: String,
    },

    #[error("expression error in `{expr}`: {message}")]
    Expression { expr: String, message: String },

    #[error("quadrature failed on [{a}, {b}]: {reason}")]
    Quadrature { a: f64, b: f64, reason: String },

    #[error("inconclusive {what}: {detail}")]
    Inconclusive { what: String, detail: String },

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("overflow while solving near x = {at}")]
    Overflow { at: f64 },

    #[error("x = {x} lies outside the grid hull [{lo}, {hi}]")]
    OutsideHull { x: f64, lo: f64, hi: f64 },

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn inconclusive(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Inconclusive {
            what: what.into(),
            detail: detail.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Expression { .. }
            | Error::UnknownFamily(_)
            | Error::BadParameter { .. }
            | Error::InvalidSpec(_) => 1,
            Error::Inconclusive { .. } => 2,
            _ => 3,
        }
    }
}
