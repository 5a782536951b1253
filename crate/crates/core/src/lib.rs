//! Non-stationary demand generation on the non-negative integers, consistent
//! with simple exponential smoothing (SES), plus an inventory-control
//! simulation harness for evaluating base-stock policies against it.
//!
//! The crate is organized around six modules:
//!
//! - [`forecast`] — SES recursions for the mean and MSE, and the feasibility
//!   test for distributions on the non-negative integers.
//! - [`distfit`] — two-moment fitting of a discrete distribution (point mass,
//!   binomial mixture, Poisson, negative-binomial mixture, geometric mixture),
//!   with exact moments, pmf evaluation, and sampling.
//! - [`dgp`] — the demand generating process: autoregressive integer demand
//!   trajectories whose conditional moments follow the SES recursions, plus a
//!   truncate-and-round ARIMA(0,1,1) baseline for bias comparison.
//! - [`inventory`] — periodic-review, full-backlogging inventory simulation
//!   with deterministic lead time and base-stock ordering.
//! - [`policy`] — base-stock levels via the Graves-corrected normal formula
//!   and via an empirical CDF of simulated lead-time demand.
//! - [`harness`] — config-driven factorial experiment runner with CSV output.
//!
//! The forecasting and fitting math is generic over the scalar type through
//! [`Scalar`]; the simulation layers operate on the `f64` aliases exported at
//! the crate root.

use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub mod dgp;
pub mod distfit;
pub mod forecast;
pub mod harness;
pub mod inventory;
pub mod policy;

/// Scalar type for the forecasting and distribution-fitting math.
///
/// Implemented for `f32` and `f64` via the blanket impl.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static
{
}

/// `f64`-backed forecast state used by the simulation layers.
pub type ForecastState64 = forecast::ForecastState<f64>;
/// `f64`-backed fitted distribution.
pub type FittedDist64 = distfit::FittedDist<f64>;
/// `f64`-backed demand path.
pub type DemandPath64 = dgp::DemandPath<f64>;
