//! Hawkes point processes with sum-of-exponential and approximate power-law
//! kernels: likelihood, exact simulation, calibration and goodness-of-fit
//! diagnostics for high-frequency event times.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod error;
pub mod estimator;
pub mod events;
pub mod experiments;
pub mod gof;
pub mod ingest;
pub mod kernels;
pub mod likelihood;
pub mod modelsel;
pub mod optim;
pub mod seeds;
pub mod simulator;

#[cfg(test)]
mod test_support;

pub use baseline::{Baseline, KnotLayout, KnotSharing};
pub use error::{HawkesError, Result};
pub use estimator::{fit, BaselineKind, FitBounds, FitResult, FitSpec};
pub use events::EventSeries;
pub use gof::{GofReport, TestOutcome};
pub use kernels::{ApproxPowerLawKernel, ExpComponent, ExpSumKernel, Kernel, KernelFamily, PowerLawVariant};
pub use likelihood::{log_likelihood, rescaled_durations, RescaledDurations};
pub use simulator::{simulate, SimConfig};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
