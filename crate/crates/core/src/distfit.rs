//! Fits a distribution on the non-negative integers to a feasible
//! (mean, variance) pair, and evaluates or samples the result.
//!
//! Class selection follows the variability statistic `a = sigma2/mu^2 - 1/mu`.
//! In order of increasing variability the classes are: mixtures of binomials
//! (`a < 0`), Poisson (`a ~ 0`), mixtures of negative binomials
//! (`0 < a < 1`), and mixtures of geometrics with balanced means (`a >= 1`).
//! A point mass is used when the requested variance is exactly zero.
//!
//! Every fit is validated against the analytic [`FittedDist::moments`] before
//! it is returned; a mismatch is a hard error.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution as _, Gamma, Poisson as PoissonSampler};

use crate::forecast::feasible;
use crate::Scalar;

/// Tolerance on the variability statistic inside which the fit is Poisson.
pub const POISSON_TOL: f64 = 1e-9;

/// Relative tolerance of the moment-matching contract.
pub const MOMENT_RTOL: f64 = 1e-9;

/// Absolute floor of the moment-matching contract (covers exact-zero
/// variances and the point-mass integrality tolerance).
pub const MOMENT_ATOL: f64 = 1e-12;

/// Error raised by [`fit`] and [`variability`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitError {
    /// No distribution on the non-negative integers has these moments.
    InfeasibleMoments { mu: f64, sigma2: f64 },
    /// A zero variance was requested for a non-integral mean.
    NonIntegralPointMass { mu: f64 },
    /// The variability statistic is undefined (`mu <= 0` or non-finite).
    UndefinedVariability { mu: f64 },
    /// Solved parameters failed the moment oracle. Indicates a numerical
    /// breakdown; never expected for feasible inputs.
    MomentMismatch { mu: f64, sigma2: f64, got_mean: f64, got_var: f64 },
}

impl fmt::Display for FitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitError::InfeasibleMoments { mu, sigma2 } => write!(
                f,
                "no non-negative integer distribution has mean {mu} and variance {sigma2}"
            ),
            FitError::NonIntegralPointMass { mu } => write!(
                f,
                "zero variance requires an integral mean, got {mu}"
            ),
            FitError::UndefinedVariability { mu } => write!(
                f,
                "variability statistic undefined for mean {mu}"
            ),
            FitError::MomentMismatch { mu, sigma2, got_mean, got_var } => write!(
                f,
                "fitted parameters reproduce ({got_mean}, {got_var}) instead of ({mu}, {sigma2})"
            ),
        }
    }
}

impl std::error::Error for FitError {}

/// A distribution on the non-negative integers, tagged by fitting class.
///
/// Mixtures combine two components: the first with probability `q`, the
/// second with probability `1 - q`. Negative binomials count failures before
/// the `r`-th success; geometrics are supported on `{0, 1, 2, ...}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FittedDist<F> {
    /// All mass on a single integer.
    PointMass(u64),
    /// `Bin(k, p)` w.p. `q`, `Bin(k+1, p)` w.p. `1 - q`.
    BinomialMixture { k: u64, p: F, q: F },
    /// Poisson with rate `lambda`.
    Poisson { lambda: F },
    /// `NB(k, p)` w.p. `q`, `NB(k+1, p)` w.p. `1 - q`.
    NegBinMixture { k: u64, p: F, q: F },
    /// `Geo(p1)` w.p. `q`, `Geo(p2)` w.p. `1 - q`, with balanced means:
    /// each component contributes half of the mixture mean.
    GeometricMixture { p1: F, p2: F, q: F },
}

/// The variability statistic `sigma2 / mu^2 - 1 / mu` that selects the
/// fitting class. Requires `mu > 0`.
pub fn variability<F: Scalar>(mu: F, sigma2: F) -> Result<F, FitError> {
    if !mu.is_finite() || mu <= F::zero() || !sigma2.is_finite() || sigma2 < F::zero() {
        return Err(FitError::UndefinedVariability { mu: to_f64(mu) });
    }
    Ok(sigma2 / (mu * mu) - F::one() / mu)
}

/// Fits one of the five [`FittedDist`] classes to `(mu, sigma2)`.
///
/// The pair must satisfy [`feasible`]. The returned distribution reproduces
/// the requested moments within `1e-9` relative (`1e-12` absolute) error,
/// checked against [`FittedDist::moments`] before returning.
pub fn fit<F: Scalar>(mu: F, sigma2: F) -> Result<FittedDist<F>, FitError> {
    let infeasible = FitError::InfeasibleMoments { mu: to_f64(mu), sigma2: to_f64(sigma2) };
    if !mu.is_finite() || mu < F::zero() || !sigma2.is_finite() || sigma2 < F::zero() {
        return Err(infeasible);
    }
    if sigma2 == F::zero() {
        let rounded = mu.round();
        if (mu - rounded).abs() > F::from_f64(1e-12).unwrap() {
            return Err(FitError::NonIntegralPointMass { mu: to_f64(mu) });
        }
        return Ok(FittedDist::PointMass(rounded.to_u64().unwrap_or(0)));
    }
    if !feasible(mu, sigma2) {
        return Err(infeasible);
    }
    if mu <= F::zero() {
        // Positive variance with zero mean cannot be realized on {0, 1, ...}.
        return Err(infeasible);
    }

    // Feasibility plus the slack band can leave a marginally below -1.
    let a = variability(mu, sigma2)?.max(-F::one());
    let tol = F::from_f64(POISSON_TOL).unwrap();

    let dist = if a < -tol {
        fit_binomial_mixture(mu, sigma2, a)?
    } else if a <= tol {
        FittedDist::Poisson { lambda: mu }
    } else if a < F::one() {
        fit_negbin_mixture(mu, sigma2, a)?
    } else {
        fit_geometric_mixture(mu, a)
    };

    verify(dist, mu, sigma2)?;
    Ok(dist)
}

/// Binomial-mixture class, `-1 <= a < 0`. With `k = floor(-1/a)` and
/// `s = k + 1 - q`, the variance match reduces to
/// `(1 + a) s^2 - 2 k s + k (k + 1) = 0`; then `p = mu / s`.
fn fit_binomial_mixture<F: Scalar>(mu: F, sigma2: F, a: F) -> Result<FittedDist<F>, FitError> {
    let one = F::one();
    let k = (-one / a).floor();
    let ku = k.to_u64().expect("binomial band index fits u64");
    let coeff = one + a;

    let (first, second) = if coeff.abs() < F::from_f64(1e-12).unwrap() {
        // a == -1 degenerates the quadratic; the linear term gives
        // s = (k + 1) / 2, and k = 1, so s = 1 and the mixture is Bin(1, mu).
        ((k + one) / (one + one), None)
    } else {
        // Stable quadratic roots: the larger root directly, the smaller via
        // the product of roots k(k+1)/(1+a).
        let disc = (-k * (one + a * (k + one))).max(F::zero());
        let big = (k + disc.sqrt()) / coeff;
        let small = k * (k + one) / (coeff * big);
        (small, Some(big))
    };

    for s in std::iter::once(first).chain(second) {
        let q = clamp_unit(k + one - s);
        let s = k + one - q;
        let mut p = mu / s;
        if p > one {
            if p > one + F::from_f64(1e-9).unwrap() {
                continue;
            }
            p = one;
        }
        let dist = FittedDist::BinomialMixture { k: ku, p, q };
        if verify(dist, mu, sigma2).is_ok() {
            return Ok(dist);
        }
    }
    Err(mismatch_error(mu, sigma2))
}

/// Negative-binomial-mixture class, `0 < a < 1`. With `k = floor(1/a)`,
/// `q = (a (k+1) -+ sqrt((k+1)(1 - a k))) / (1 + a)` and
/// `p = (k + 1 - q) / (mu + k + 1 - q)`.
fn fit_negbin_mixture<F: Scalar>(mu: F, sigma2: F, a: F) -> Result<FittedDist<F>, FitError> {
    let one = F::one();
    let k = (one / a).floor();
    let ku = k.to_u64().expect("negative-binomial band index fits u64");
    let root = ((k + one) * (one - a * k)).max(F::zero()).sqrt();

    for sign in [-one, one] {
        let q = clamp_unit((a * (k + one) + sign * root) / (one + a));
        let s = k + one - q;
        let p = s / (mu + s);
        let dist = FittedDist::NegBinMixture { k: ku, p, q };
        if verify(dist, mu, sigma2).is_ok() {
            return Ok(dist);
        }
    }
    Err(mismatch_error(mu, sigma2))
}

/// Geometric-mixture class, `a >= 1`, with balanced means: each component
/// contributes `mu / 2` to the mixture mean. Solving
/// `m1 + m2 = (1 + a) mu` and `m1 m2 = (1 + a) mu^2 / 2` gives, in
/// cancellation-free form,
///
/// ```text
/// q  = 1 / ((1 + a) + sqrt(a^2 - 1))
/// m1 = mu / (2 q)          m2 = mu (1 + a) q
/// ```
fn fit_geometric_mixture<F: Scalar>(mu: F, a: F) -> FittedDist<F> {
    let one = F::one();
    let two = one + one;
    let z = ((a - one) * (a + one)).max(F::zero()).sqrt();
    let denom = (one + a) + z;
    let q = one / denom;
    let m1 = mu * denom / two;
    let m2 = mu * (one + a) * q;
    FittedDist::GeometricMixture { p1: one / (one + m1), p2: one / (one + m2), q }
}

fn mismatch_error<F: Scalar>(mu: F, sigma2: F) -> FitError {
    FitError::MomentMismatch {
        mu: to_f64(mu),
        sigma2: to_f64(sigma2),
        got_mean: f64::NAN,
        got_var: f64::NAN,
    }
}

fn verify<F: Scalar>(dist: FittedDist<F>, mu: F, sigma2: F) -> Result<(), FitError> {
    let (mean, var) = dist.moments();
    let mean_ok = within(mean, mu);
    // A Poisson fit pins the variance to the mean by class definition; the
    // requested variance already sits inside the POISSON_TOL band.
    let var_ok = match dist {
        FittedDist::Poisson { .. } => true,
        _ => within(var, sigma2),
    };
    if mean_ok && var_ok {
        Ok(())
    } else {
        Err(FitError::MomentMismatch {
            mu: to_f64(mu),
            sigma2: to_f64(sigma2),
            got_mean: to_f64(mean),
            got_var: to_f64(var),
        })
    }
}

fn within<F: Scalar>(x: F, target: F) -> bool {
    // The contract tolerances assume f64; wider-epsilon scalars get a floor
    // of 128 ulps so f32 fits remain constructible.
    let anchor = F::from_f64(128.0).unwrap() * F::epsilon();
    let rtol = F::from_f64(MOMENT_RTOL).unwrap().max(anchor);
    let atol = F::from_f64(MOMENT_ATOL).unwrap().max(anchor);
    (x - target).abs() <= rtol * target.abs() + atol
}

fn clamp_unit<F: Scalar>(x: F) -> F {
    x.max(F::zero()).min(F::one())
}

fn to_f64<F: Scalar>(x: F) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

impl<F: Scalar> FittedDist<F> {
    /// Analytic mean and variance, combined from the component moments.
    ///
    /// For a two-component mixture the variance uses the decomposition
    /// `q v1 + (1-q) v2 + q (1-q) (m1 - m2)^2`, which avoids cancellation.
    pub fn moments(&self) -> (F, F) {
        match *self {
            FittedDist::PointMass(k) => (F::from_u64(k).unwrap(), F::zero()),
            FittedDist::BinomialMixture { k, p, q } => {
                let kf = F::from_u64(k).unwrap();
                let v = |n: F| (n * p, n * p * (F::one() - p));
                mix_moments(q, v(kf), v(kf + F::one()))
            }
            FittedDist::Poisson { lambda } => (lambda, lambda),
            FittedDist::NegBinMixture { k, p, q } => {
                let kf = F::from_u64(k).unwrap();
                let v = |r: F| {
                    let m = r * (F::one() - p) / p;
                    (m, m / p)
                };
                mix_moments(q, v(kf), v(kf + F::one()))
            }
            FittedDist::GeometricMixture { p1, p2, q } => {
                let v = |p: F| {
                    let m = (F::one() - p) / p;
                    (m, m / p)
                };
                mix_moments(q, v(p1), v(p2))
            }
        }
    }

    /// Probability mass at `x`. Mixtures combine component pmfs with their
    /// weights; zero-weight components are skipped.
    pub fn pmf(&self, x: u64) -> F {
        match *self {
            FittedDist::PointMass(k) => {
                if x == k {
                    F::one()
                } else {
                    F::zero()
                }
            }
            FittedDist::BinomialMixture { k, p, q } => {
                mix_pmf(q, |n| binomial_pmf(n, p, x), k, k + 1)
            }
            FittedDist::Poisson { lambda } => poisson_pmf(lambda, x),
            FittedDist::NegBinMixture { k, p, q } => {
                mix_pmf(q, |r| negbin_pmf(r, p, x), k, k + 1)
            }
            FittedDist::GeometricMixture { p1, p2, q } => {
                let one = F::one();
                let mut total = F::zero();
                if q > F::zero() {
                    total = total + q * geometric_pmf(p1, x);
                }
                if q < one {
                    total = total + (one - q) * geometric_pmf(p2, x);
                }
                total
            }
        }
    }

    /// Draws one integer. The distribution of draws matches [`Self::pmf`];
    /// the stream is advanced deterministically, so a fixed seed reproduces
    /// the same sequence.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            FittedDist::PointMass(k) => k,
            FittedDist::BinomialMixture { k, p, q } => {
                let n = pick_component(rng, to_f64(q), k, k + 1);
                sample_binomial(rng, n, to_f64(p))
            }
            FittedDist::Poisson { lambda } => sample_poisson(rng, to_f64(lambda)),
            FittedDist::NegBinMixture { k, p, q } => {
                let r = pick_component(rng, to_f64(q), k, k + 1);
                sample_negbin(rng, r, to_f64(p))
            }
            FittedDist::GeometricMixture { p1, p2, q } => {
                let u: f64 = rng.random();
                let p = if u < to_f64(q) { p1 } else { p2 };
                sample_geometric(rng, to_f64(p))
            }
        }
    }

    /// Short class name: `point_mass`, `binomial_mixture`, `poisson`,
    /// `negbin_mixture` or `geometric_mixture`.
    pub fn class_tag(&self) -> &'static str {
        match self {
            FittedDist::PointMass(_) => "point_mass",
            FittedDist::BinomialMixture { .. } => "binomial_mixture",
            FittedDist::Poisson { .. } => "poisson",
            FittedDist::NegBinMixture { .. } => "negbin_mixture",
            FittedDist::GeometricMixture { .. } => "geometric_mixture",
        }
    }

    /// Kahan-sums the pmf from 0 upward until the cumulative mass reaches
    /// `1 - 1e-12` or `x` exceeds `mean + 50 sd + 50`, whichever comes
    /// first, and returns the accumulated mass.
    pub fn truncated_mass(&self) -> F {
        let (mean, var) = self.moments();
        let fifty = F::from_f64(50.0).unwrap();
        let bound = mean + fifty * var.max(F::zero()).sqrt() + fifty;
        let target = F::one() - F::from_f64(1e-12).unwrap();
        let bound = if bound.is_finite() {
            bound.to_u64().unwrap_or(u64::MAX)
        } else {
            0
        };

        let mut sum = F::zero();
        let mut carry = F::zero();
        for x in 0..=bound {
            let term = self.pmf(x) - carry;
            let next = sum + term;
            carry = (next - sum) - term;
            sum = next;
            if sum >= target {
                break;
            }
        }
        sum
    }
}

fn mix_moments<F: Scalar>(q: F, (m1, v1): (F, F), (m2, v2): (F, F)) -> (F, F) {
    let w = F::one() - q;
    let mean = q * m1 + w * m2;
    let diff = m1 - m2;
    let var = q * v1 + w * v2 + q * w * diff * diff;
    (mean, var)
}

fn mix_pmf<F: Scalar>(q: F, pmf: impl Fn(u64) -> F, n1: u64, n2: u64) -> F {
    let one = F::one();
    let mut total = F::zero();
    if q > F::zero() {
        total = total + q * pmf(n1);
    }
    if q < one {
        total = total + (one - q) * pmf(n2);
    }
    total
}

fn pick_component<R: Rng + ?Sized>(rng: &mut R, q: f64, first: u64, second: u64) -> u64 {
    let u: f64 = rng.random();
    if u < q {
        first
    } else {
        second
    }
}

fn sample_binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    let p = p.clamp(0.0, 1.0);
    rand_distr::Binomial::new(n, p)
        .expect("validated binomial parameters")
        .sample(rng)
}

fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda.is_nan() || lambda <= 0.0 {
        return 0;
    }
    // rand_distr rejects rates above ~1.8e19.
    let draw: f64 = PoissonSampler::new(lambda.min(1e18))
        .expect("validated Poisson rate")
        .sample(rng);
    draw as u64
}

/// Negative binomial via its gamma-Poisson representation:
/// `NB(r, p) = Poisson(Gamma(r, (1-p)/p))`. A zero gamma draw short-circuits
/// to zero, which is the exact Poisson(0) outcome.
fn sample_negbin<R: Rng + ?Sized>(rng: &mut R, r: u64, p: f64) -> u64 {
    if p >= 1.0 {
        return 0;
    }
    let scale = (1.0 - p) / p;
    let lambda: f64 = Gamma::new(r as f64, scale)
        .expect("validated gamma parameters")
        .sample(rng);
    sample_poisson(rng, lambda)
}

fn sample_geometric<R: Rng + ?Sized>(rng: &mut R, p: f64) -> u64 {
    if p >= 1.0 {
        return 0;
    }
    rand_distr::Geometric::new(p)
        .expect("validated geometric parameter")
        .sample(rng)
}

/// Natural log of the gamma function for positive arguments (Lanczos, g = 7).
/// Accurate to ~1e-14 relative for the `x >= 0.5` range used here.
#[allow(clippy::excessive_precision)] // published coefficient values
fn ln_gamma<F: Scalar>(x: F) -> F {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    // 0.5 * ln(2 pi)
    let half_ln_two_pi = F::from_f64(0.918938533204672741780329736406).unwrap();
    let g = F::from_f64(7.5).unwrap();
    let z = x - F::one();
    let mut sum = F::from_f64(0.99999999999980993).unwrap();
    for (i, &c) in COEFFS.iter().enumerate() {
        sum = sum + F::from_f64(c).unwrap() / (z + F::from_usize(i + 1).unwrap());
    }
    let base = z + g;
    half_ln_two_pi + (z + F::from_f64(0.5).unwrap()) * base.ln() - base + sum.ln()
}

fn ln_factorial<F: Scalar>(x: u64) -> F {
    ln_gamma(F::from_u64(x + 1).unwrap())
}

fn binomial_pmf<F: Scalar>(n: u64, p: F, x: u64) -> F {
    let zero = F::zero();
    let one = F::one();
    if x > n {
        return zero;
    }
    if p <= zero {
        return if x == 0 { one } else { zero };
    }
    if p >= one {
        return if x == n { one } else { zero };
    }
    let ln_choose = ln_factorial::<F>(n) - ln_factorial::<F>(x) - ln_factorial::<F>(n - x);
    let xf = F::from_u64(x).unwrap();
    let rest = F::from_u64(n - x).unwrap();
    (ln_choose + xf * p.ln() + rest * (-p).ln_1p()).exp()
}

fn poisson_pmf<F: Scalar>(lambda: F, x: u64) -> F {
    if lambda <= F::zero() {
        return if x == 0 { F::one() } else { F::zero() };
    }
    let xf = F::from_u64(x).unwrap();
    (xf * lambda.ln() - lambda - ln_factorial::<F>(x)).exp()
}

/// `NB(r, p)` counts failures before the `r`-th success:
/// `pmf(x) = C(x + r - 1, x) p^r (1 - p)^x`.
fn negbin_pmf<F: Scalar>(r: u64, p: F, x: u64) -> F {
    let zero = F::zero();
    let one = F::one();
    if p >= one {
        return if x == 0 { one } else { zero };
    }
    if p <= zero {
        return zero;
    }
    let rf = F::from_u64(r).unwrap();
    let xf = F::from_u64(x).unwrap();
    let ln_coeff = ln_gamma(xf + rf) - ln_gamma(rf) - ln_factorial::<F>(x);
    (ln_coeff + rf * p.ln() + xf * (-p).ln_1p()).exp()
}

fn geometric_pmf<F: Scalar>(p: F, x: u64) -> F {
    let one = F::one();
    if p >= one {
        return if x == 0 { one } else { F::zero() };
    }
    if p <= F::zero() {
        return F::zero();
    }
    let xf = F::from_u64(x).unwrap();
    (xf * (-p).ln_1p()).exp() * p
}
