//! Lace-expansion recursion engine: step kernels, the convolution recursion
//! for `f_n(k; z)`, critical-point sequences, induction-hypothesis checks,
//! model coefficient providers and central-limit diagnostics.

pub mod cache;
pub mod clt;
pub mod config;
pub mod critical;
pub mod engine;
pub mod error;
pub mod induction;
pub mod kernels;
pub mod models;
pub mod output;
pub mod quadrature;
pub mod run;

pub use engine::{run_recursion, CoefficientProvider, RecursionState};
pub use error::{Error, Result};
pub use kernels::{check_assumption_d, AssumptionDReport, KPoint, StepKernel};
pub use models::{op::OpProvider, saw::SawProvider, srw::SrwProvider, synthetic::SyntheticProvider};
pub use quadrature::QuadratureSpec;
