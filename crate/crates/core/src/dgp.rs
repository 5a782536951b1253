//! The demand generating process: autoregressive integer demand whose
//! conditional mean and variance follow the SES recursions, plus a
//! truncate-and-round ARIMA(0,1,1) baseline used for bias comparison.
//!
//! All randomness flows through per-path substreams derived from a master
//! seed, so batch generation is reproducible regardless of worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use rayon::prelude::*;

use crate::distfit::{self, FitError, FittedDist};
use crate::forecast::ForecastState;
use crate::Scalar;

/// Below this level for both the mean and the MSE, the conditional
/// distribution collapses to a point mass at zero instead of evaluating the
/// variability statistic at a vanishing mean.
pub const UNDERFLOW_GUARD: f64 = 1e-12;

/// Error raised when a conditional forecast state admits no distribution on
/// the non-negative integers. Reachable only with `alpha != beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DgpError {
    /// The state reached before generating period `step` (1-based) was
    /// infeasible.
    InfeasibleState { step: u32, mu: f64, sigma2: f64 },
    /// As `InfeasibleState`, for path `path` of a batch.
    PathInfeasible { path: u64, step: u32, mu: f64, sigma2: f64 },
}

impl DgpError {
    pub(crate) fn with_step(self, step: u32) -> Self {
        match self {
            DgpError::InfeasibleState { mu, sigma2, .. } => {
                DgpError::InfeasibleState { step, mu, sigma2 }
            }
            other => other,
        }
    }

    fn for_path(self, path: u64) -> Self {
        match self {
            DgpError::InfeasibleState { step, mu, sigma2 } => {
                DgpError::PathInfeasible { path, step, mu, sigma2 }
            }
            other => other,
        }
    }
}

impl std::fmt::Display for DgpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DgpError::InfeasibleState { step, mu, sigma2 } => write!(
                f,
                "infeasible forecast state (mu={mu}, sigma2={sigma2}) at period {step}"
            ),
            DgpError::PathInfeasible { path, step, mu, sigma2 } => write!(
                f,
                "infeasible forecast state (mu={mu}, sigma2={sigma2}) at period {step} of path {path}"
            ),
        }
    }
}

impl std::error::Error for DgpError {}

/// A realized demand trajectory `d_1..d_T` together with the conditional
/// `(mu_t, sigma2_t)` that generated each draw, and the stream seed.
///
/// Re-running the SES update over `demands` from the initial state
/// reproduces `means` and `variances` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandPath<F> {
    pub demands: Vec<u64>,
    pub means: Vec<F>,
    pub variances: Vec<F>,
    pub seed: u64,
}

impl<F> DemandPath<F> {
    pub fn len(&self) -> usize {
        self.demands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demands.is_empty()
    }
}

/// SplitMix64 finalizer; bijective on `u64`.
fn mix(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Strong 64-bit mix of `(master, index)`. Injective in `index` for a fixed
/// master, so substream seeds are pairwise distinct.
pub fn substream_seed(master: u64, index: u64) -> u64 {
    mix(master ^ mix(index))
}

/// Folds a sequence of stream labels into a seed, one substream hop per part.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(master, |acc, &p| substream_seed(acc, p))
}

/// The conditional demand distribution implied by a forecast state, with the
/// [`UNDERFLOW_GUARD`] applied.
pub fn conditional_dist<F: Scalar>(
    state: &ForecastState<F>,
) -> Result<FittedDist<F>, FitError> {
    let guard = F::from_f64(UNDERFLOW_GUARD).unwrap();
    if state.mean() < guard && state.mse() < guard {
        return Ok(FittedDist::PointMass(0));
    }
    distfit::fit(state.mean(), state.mse())
}

/// Draws one demand from the conditional distribution of `state` and returns
/// it with the SES-updated state.
pub fn next<F: Scalar, R: Rng + ?Sized>(
    state: &ForecastState<F>,
    rng: &mut R,
) -> Result<(u64, ForecastState<F>), DgpError> {
    let dist = conditional_dist(state).map_err(|_| DgpError::InfeasibleState {
        step: 1,
        mu: state.mean().to_f64().unwrap_or(f64::NAN),
        sigma2: state.mse().to_f64().unwrap_or(f64::NAN),
    })?;
    let d = dist.sample(rng);
    Ok((d, state.ses_update(d)))
}

/// Generates a demand path of `horizon` periods from `init`, seeding a
/// dedicated stream with `seed`. The recorded `(mu_t, sigma2_t)` are the
/// conditional moments in force when `d_t` was drawn.
pub fn trajectory<F: Scalar>(
    init: &ForecastState<F>,
    horizon: u32,
    seed: u64,
) -> Result<DemandPath<F>, DgpError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = *init;
    let cap = horizon as usize;
    let mut demands = Vec::with_capacity(cap);
    let mut means = Vec::with_capacity(cap);
    let mut variances = Vec::with_capacity(cap);
    for t in 1..=horizon {
        means.push(state.mean());
        variances.push(state.mse());
        let (d, updated) = next(&state, &mut rng).map_err(|e| e.with_step(t))?;
        demands.push(d);
        state = updated;
    }
    Ok(DemandPath { demands, means, variances, seed })
}

/// Generates `n` independent paths; path `i` uses the substream seed
/// `substream_seed(master_seed, i)`. The result does not depend on worker
/// count or scheduling order, and errors are reported for the lowest failing
/// path index.
pub fn batch<F: Scalar>(
    init: &ForecastState<F>,
    horizon: u32,
    n: u32,
    master_seed: u64,
) -> Result<Vec<DemandPath<F>>, DgpError> {
    let results: Vec<Result<DemandPath<F>, DgpError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            trajectory(init, horizon, substream_seed(master_seed, u64::from(i)))
                .map_err(|e| e.for_path(u64::from(i)))
        })
        .collect();
    results.into_iter().collect()
}

/// The SES-equivalent ARIMA(0,1,1) baseline: a real-valued level
/// `L_{t+1} = L_t + alpha * eps_t` with `eps_t ~ Normal(0, sigma2)`, emitting
/// `d_t = max(0, round(L_t + eps_t))` with round-half-to-even. Truncation and
/// rounding apply only to the emitted demand; the level itself stays
/// untruncated. `means` records the internal level, `variances` the constant
/// error variance.
pub fn arima_trajectory<F: Scalar>(
    init: &ForecastState<F>,
    horizon: u32,
    seed: u64,
) -> DemandPath<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma2 = init.mse().to_f64().unwrap_or(0.0);
    let sigma = sigma2.sqrt();
    let alpha = init.alpha().to_f64().unwrap_or(0.0);
    let noise = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));

    let mut level = init.mean().to_f64().unwrap_or(0.0);
    let cap = horizon as usize;
    let mut demands = Vec::with_capacity(cap);
    let mut means = Vec::with_capacity(cap);
    let mut variances = Vec::with_capacity(cap);
    for _ in 0..horizon {
        means.push(F::from_f64(level).unwrap());
        variances.push(F::from_f64(sigma2).unwrap());
        let eps = noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
        let rounded = (level + eps).round_ties_even();
        demands.push(if rounded > 0.0 { rounded as u64 } else { 0 });
        level += alpha * eps;
    }
    DemandPath { demands, means, variances, seed }
}

/// One row of a [`bias_study`] table: cross-sectional demand means and
/// standard errors at period `t` for the integer DGP and the
/// truncated-rounded ARIMA baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasRow {
    pub t: u32,
    pub dgp_mean: f64,
    pub arima_mean: f64,
    pub dgp_se: f64,
    pub arima_se: f64,
}

/// Generates `paths` demand paths with each generator under common substream
/// seeding (path `i` of both generators uses the same substream seed) and
/// tabulates per-period cross-sectional means and standard errors.
///
/// `sigma` is the standard deviation: the DGP starts from
/// `(f1, sigma^2, alpha, alpha)` and the baseline uses error variance
/// `sigma^2`. Panics if that state is invalid; callers validate first.
pub fn bias_study(
    f1: f64,
    sigma: f64,
    alpha: f64,
    paths: u32,
    horizon: u32,
    master_seed: u64,
) -> Vec<BiasRow> {
    let init = ForecastState::new(f1, sigma * sigma, alpha, alpha)
        .expect("valid forecast state for bias study");
    let generated: Vec<(Vec<u64>, Vec<u64>)> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let seed = substream_seed(master_seed, u64::from(i));
            let dgp = trajectory(&init, horizon, seed)
                .expect("equal smoothing constants keep the DGP feasible");
            let arima = arima_trajectory(&init, horizon, seed);
            (dgp.demands, arima.demands)
        })
        .collect();

    (0..horizon as usize)
        .map(|t| {
            let (dgp_mean, dgp_se) = mean_se(generated.iter().map(|(d, _)| d[t] as f64));
            let (arima_mean, arima_se) = mean_se(generated.iter().map(|(_, a)| a[t] as f64));
            BiasRow { t: t as u32 + 1, dgp_mean, arima_mean, dgp_se, arima_se }
        })
        .collect()
}

/// Sample mean and standard error (sample SD over sqrt(n), n-1 denominator).
pub(crate) fn mean_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let xs: Vec<f64> = values.collect();
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    let sd = (ss / (n as f64 - 1.0)).sqrt();
    (mean, sd / (n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(f: f64, mse: f64, alpha: f64, beta: f64) -> ForecastState<f64> {
        ForecastState::new(f, mse, alpha, beta).unwrap()
    }

    #[test]
    fn point_mass_regime_is_a_fixed_point() {
        let init = state(3.0, 0.0, 0.1, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (d, updated) = next(&init, &mut rng).unwrap();
        assert_eq!(d, 3);
        assert!((updated.mean() - 3.0).abs() < 1e-12);
        assert_eq!(updated.mse(), 0.0);
    }

    #[test]
    fn next_is_reproducible() {
        let init = state(10.0, 60.0, 0.05, 0.05);
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(next(&init, &mut a).unwrap(), next(&init, &mut b).unwrap());
    }

    #[test]
    fn infeasible_state_is_reported() {
        // Updating Bin(1, 0.25) with d = 0 under unequal smoothing lands on
        // (0.2375, 0.1625), which no integer distribution can match.
        let broken = state(0.25, 0.1875, 0.05, 0.2).ses_update(0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match next(&broken, &mut rng) {
            Err(DgpError::InfeasibleState { mu, sigma2, .. }) => {
                assert!((mu - 0.2375).abs() < 1e-12);
                assert!((sigma2 - 0.1625).abs() < 1e-12);
            }
            other => panic!("expected infeasible state, got {other:?}"),
        }
    }

    #[test]
    fn trajectory_from_zero_draw_fails_at_next_step() {
        let init = state(0.25, 0.1875, 0.05, 0.2);
        // Find a seed whose first Bernoulli draw is 0; the second period must
        // then report infeasibility.
        let seed = (0..100)
            .find(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                next(&init, &mut rng).unwrap().0 == 0
            })
            .expect("a zero draw within 100 seeds");
        match trajectory(&init, 10, seed) {
            Err(DgpError::InfeasibleState { step: 2, .. }) => {}
            other => panic!("expected infeasibility at period 2, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_demand_stays_constant() {
        let path = trajectory(&state(5.0, 0.0, 0.3, 0.3), 10, 77).unwrap();
        assert_eq!(path.demands, vec![5; 10]);
    }

    #[test]
    fn trajectory_records_feasible_states() {
        let path = trajectory(&state(10.0, 60.0, 0.05, 0.05), 100, 123).unwrap();
        assert_eq!(path.len(), 100);
        for (mu, s2) in path.means.iter().zip(&path.variances) {
            assert!(crate::forecast::feasible(*mu, *s2));
        }
    }

    #[test]
    fn trajectory_is_deterministic() {
        let init = state(10.0, 60.0, 0.05, 0.05);
        assert_eq!(
            trajectory(&init, 50, 42).unwrap(),
            trajectory(&init, 50, 42).unwrap()
        );
    }

    #[test]
    fn replaying_updates_reproduces_recorded_moments() {
        let init = state(2.0, 4.0, 0.1, 0.1);
        let path = trajectory(&init, 200, 7).unwrap();
        let mut st = init;
        for i in 0..path.len() {
            assert_eq!(path.means[i], st.mean(), "period {}", i + 1);
            assert_eq!(path.variances[i], st.mse(), "period {}", i + 1);
            st = st.ses_update(path.demands[i]);
        }
    }

    #[test]
    fn batch_seeds_are_pairwise_distinct() {
        let init = state(2.0, 4.0, 0.1, 0.1);
        let paths = batch(&init, 3, 4, 99).unwrap();
        let mut seeds: Vec<u64> = paths.iter().map(|p| p.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 4);
    }

    #[test]
    fn batch_is_worker_count_independent() {
        let init = state(2.0, 4.0, 0.1, 0.1);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| batch(&init, 20, 16, 2024).unwrap())
        };
        assert_eq!(run(1), run(8));
    }

    #[test]
    fn arima_without_noise_repeats_rounded_forecast() {
        let init = state(2.5, 0.0, 0.1, 0.1);
        let path = arima_trajectory(&init, 12, 3);
        // round-half-to-even sends 2.5 to 2
        assert_eq!(path.demands, vec![2; 12]);
    }

    #[test]
    fn arima_is_deterministic() {
        let init = state(2.0, 4.0, 0.1, 0.1);
        assert_eq!(arima_trajectory(&init, 30, 11), arima_trajectory(&init, 30, 11));
    }

    #[test]
    fn bias_study_zero_sigma_is_flat() {
        let rows = bias_study(2.0, 0.0, 0.1, 5, 8, 1);
        for row in rows {
            assert_eq!(row.dgp_mean, 2.0);
            assert_eq!(row.arima_mean, 2.0);
            assert_eq!(row.dgp_se, 0.0);
            assert_eq!(row.arima_se, 0.0);
        }
    }

    #[test]
    fn standard_error_of_two_samples() {
        let (mean, se) = mean_se([1.0, 3.0].into_iter());
        assert_eq!(mean, 2.0);
        // sample SD = sqrt(2), SE = sqrt(2)/sqrt(2) = 1
        assert!((se - 1.0).abs() < 1e-12);
    }

    #[test]
    fn substream_seed_is_injective_in_index() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..10_000u64 {
            assert!(seen.insert(substream_seed(77, i)));
        }
    }
}
