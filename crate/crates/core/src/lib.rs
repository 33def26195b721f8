//! Boundary classification, r-excessive functions and martingale diagnostics
//! for one-dimensional regular diffusions.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod excessive;
pub mod expr;
pub mod grid;
pub mod interp;
pub mod martingale;
pub mod mc;
pub mod pipeline;
pub mod quadrature;
pub mod report;
pub mod scale;

pub use config::{DiffusionConfig, RunConfig};
pub use diffusion::{
    catalog, catalog_with, custom, Coefficient, DiffusionSpec, IntervalSpec, Side, SpecSource,
};
pub use error::{Error, Result};
pub use excessive::{solve_excessive, Direction, DiscountRate, ExcessiveFunction};
pub use grid::GridSpec;
pub use martingale::{
    full_report, kotani_verdict, verdict_from_boundary, FullReport, LimitEstimate,
    MartingaleVerdict, Regime, Verdict,
};
pub use mc::{
    hitting_laplace, martingale_deficit, ratio_identity_with, scale_deficit, simulate,
    EstimateWithCI, PathEnsemble, RatioIdentity, SimulationConfig, Simulator,
};
pub use scale::{derive_scale_speed, ScaleSpeed};
