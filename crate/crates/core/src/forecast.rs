//! Simple exponential smoothing of the demand mean and mean-square error,
//! and the feasibility test for matching a distribution on the non-negative
//! integers to a (mean, variance) pair.

use std::fmt;

use crate::Scalar;

/// Absolute slack applied in favor of feasibility, absorbing floating-point
/// noise at exact boundaries such as Bernoulli starts.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

/// Error raised when constructing a [`ForecastState`] from invalid inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecastError {
    /// A field was NaN or infinite.
    NonFinite,
    /// The mean forecast was negative.
    NegativeMean,
    /// The MSE forecast was negative.
    NegativeMse,
    /// A smoothing constant was outside `[0, 1]`.
    SmoothingOutOfRange,
}

impl fmt::Display for ForecastError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForecastError::NonFinite => "forecast state fields must be finite",
            ForecastError::NegativeMean => "mean forecast must be non-negative",
            ForecastError::NegativeMse => "MSE forecast must be non-negative",
            ForecastError::SmoothingOutOfRange => "smoothing constants must lie in [0, 1]",
        })
    }
}

impl std::error::Error for ForecastError {}

/// The SES state: a one-step-ahead mean forecast `f`, the matching
/// mean-square-error forecast `mse`, and the two smoothing constants.
///
/// This pair is the entire conditional state of the demand generating
/// process. Fields are validated at construction; updates assume a valid
/// state and do not re-check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastState<F> {
    f: F,
    mse: F,
    alpha: F,
    beta: F,
}

impl<F: Scalar> ForecastState<F> {
    /// Validates and builds a state. `f` and `mse` must be finite and
    /// non-negative; `alpha` and `beta` must lie in `[0, 1]`.
    pub fn new(f: F, mse: F, alpha: F, beta: F) -> Result<Self, ForecastError> {
        if !(f.is_finite() && mse.is_finite() && alpha.is_finite() && beta.is_finite()) {
            return Err(ForecastError::NonFinite);
        }
        if f < F::zero() {
            return Err(ForecastError::NegativeMean);
        }
        if mse < F::zero() {
            return Err(ForecastError::NegativeMse);
        }
        if alpha < F::zero() || alpha > F::one() || beta < F::zero() || beta > F::one() {
            return Err(ForecastError::SmoothingOutOfRange);
        }
        Ok(ForecastState { f, mse, alpha, beta })
    }

    /// One-step-ahead mean forecast.
    pub fn mean(&self) -> F {
        self.f
    }

    /// One-step-ahead mean-square-error forecast.
    pub fn mse(&self) -> F {
        self.mse
    }

    /// Smoothing constant for the mean recursion.
    pub fn alpha(&self) -> F {
        self.alpha
    }

    /// Smoothing constant for the MSE recursion.
    pub fn beta(&self) -> F {
        self.beta
    }

    /// Applies one SES step with an observed demand `d`:
    ///
    /// ```text
    /// f'   = alpha * d + (1 - alpha) * f
    /// mse' = beta * (d - f)^2 + (1 - beta) * mse
    /// ```
    ///
    /// Pure: returns the updated state, leaving `self` untouched. The
    /// recursions are evaluated in the increment form `f + alpha * (d - f)`
    /// so that `d == f` is an exact fixed point of the mean update.
    #[must_use]
    pub fn ses_update(&self, d: u64) -> Self {
        let d = F::from_u64(d).expect("demand representable in scalar type");
        let err = d - self.f;
        ForecastState {
            f: self.f + self.alpha * err,
            mse: self.mse + self.beta * (err * err - self.mse),
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    /// Whether `(mean, mse)` can be matched by a distribution on the
    /// non-negative integers. See [`feasible`].
    pub fn is_feasible(&self) -> bool {
        feasible(self.f, self.mse)
    }
}

/// Tests whether some random variable on the non-negative integers has mean
/// `mu` and variance `sigma2`: with `delta = mu - floor(mu)`, the pair is
/// feasible iff `sigma2 >= delta * (1 - delta)`, i.e. the variance is at
/// least that of a Bernoulli spanning the two nearest integers.
///
/// The comparison grants [`FEASIBILITY_SLACK`] of absolute slack toward
/// feasibility. Non-finite or negative inputs are reported infeasible.
pub fn feasible<F: Scalar>(mu: F, sigma2: F) -> bool {
    if !(mu.is_finite() && sigma2.is_finite()) || mu < F::zero() || sigma2 < F::zero() {
        return false;
    }
    let delta = mu - mu.floor();
    let slack = F::from_f64(FEASIBILITY_SLACK).unwrap();
    sigma2 + slack >= delta * (F::one() - delta)
}
