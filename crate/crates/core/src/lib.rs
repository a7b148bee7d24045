//! Prior-predictive Monte Carlo pricing for data products.
//!
//! A deal is described by attributes ([`deal_model::DealAttributes`]) that map
//! to five positive price multipliers. Uncertainty in the baseline, the
//! elasticities and the residual noise is expressed as a prior, restricted by
//! business rules, and pushed through a lognormal price model to produce
//! P5/P50/P95-style bands.

// `!(a < b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anchor;
pub mod calibration;
pub mod compare;
pub mod deal_mix;
pub mod deal_model;
pub mod engine;
pub mod error;
pub mod priors;
pub mod report;
pub mod rng;
pub mod scenario;

pub use deal_mix::{ConfigurationClass, DealMix};
pub use deal_model::{map_attributes, DealAttributes, FormulaParams, Lever, MultiplierVector, NodeTable};
pub use engine::{simulate, DealSource, PriceBands, PriceSampleSet, SimulationPlan};
pub use error::{Error, ErrorKind, Result};
pub use priors::{ConstraintSet, ParameterVector, PriorSpec};
pub use scenario::Scenario;

/// Version stamped into every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
