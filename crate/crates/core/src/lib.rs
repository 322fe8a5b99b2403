//! Optimal execution with market and limit orders under affine fill
//! uncertainty.
//!
//! The crate solves the value-function coefficient ODEs (closed form where
//! available, RK4 otherwise), evaluates the feedback policy and the buy-sell
//! boundary, and simulates controlled executions by Monte Carlo.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod exec;
pub mod model;
pub mod params;
pub mod policy;
pub mod rng;
pub mod schedule;
pub mod sim;
pub mod spline;
pub mod suite;
pub mod validity;
pub mod value;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{CorrelationTerm, UncertaintyMode};
pub use params::{ModelParams, PenaltyParams};
pub use sim::{MCResult, PolicyKind, SimConfig, SimPath};
pub use value::ValueCoefficients;
