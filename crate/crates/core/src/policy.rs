//! Base-stock level computation: the Graves-corrected normal formula (with
//! fixed or updated sigma) and the empirical-CDF scenario method, plus the
//! order-up-to rule that turns a level into an order quantity.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{self, substream_seed, DgpError};
use crate::forecast::ForecastState;

/// Base-stock computation method.
///
/// `S1a` and `S1b` use the Graves-corrected normal formula, with the sigma
/// estimate respectively frozen at its initial value or updated from the
/// current MSE forecast. `S2` reads the target quantile off an empirical CDF
/// of simulated lead-time demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    S1a,
    S1b,
    S2,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::S1a => "s1a",
            Method::S1b => "s1b",
            Method::S2 => "s2",
        }
    }
}

/// Whether the S2 scenario set is regenerated from the current forecast
/// state every review period, or computed once at the first period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum S2Recompute {
    #[default]
    EveryPeriod,
    Once,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyError {
    /// Quantile argument outside the open interval (0, 1).
    QuantileDomain(f64),
    /// In-stock probability target outside the open interval (0, 1).
    InvalidTarget(f64),
    /// Total lead time must be at least one period.
    InvalidLeadTime(u32),
    /// Scenario count must be positive.
    InvalidScenarioCount(u32),
    /// Some other numeric argument was out of range.
    InvalidParameter(&'static str),
    /// Scenario generation hit an infeasible forecast state.
    Dgp(DgpError),
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyError::QuantileDomain(p) => {
                write!(f, "normal quantile requires p in (0, 1), got {p}")
            }
            PolicyError::InvalidTarget(p) => {
                write!(f, "in-stock target must lie strictly in (0, 1), got {p}")
            }
            PolicyError::InvalidLeadTime(l) => {
                write!(f, "total lead time must be positive, got {l}")
            }
            PolicyError::InvalidScenarioCount(n) => {
                write!(f, "scenario count must be positive, got {n}")
            }
            PolicyError::InvalidParameter(name) => {
                write!(f, "invalid value for parameter `{name}`")
            }
            PolicyError::Dgp(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PolicyError {}

impl From<DgpError> for PolicyError {
    fn from(e: DgpError) -> Self {
        PolicyError::Dgp(e)
    }
}

/// Inverse CDF of the standard normal distribution (Wichura's AS 241,
/// double-precision branch), accurate to well under 1e-8 absolute over
/// `(1e-12, 1 - 1e-12)`.
#[allow(clippy::excessive_precision)] // published coefficient values
pub fn normal_quantile(p: f64) -> Result<f64, PolicyError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(PolicyError::QuantileDomain(p));
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        const A: [f64; 8] = [
            3.387_132_872_796_366_5,
            133.141_667_891_784_38,
            1_971.590_950_306_551_3,
            13_731.693_765_509_461,
            45_921.953_931_549_87,
            67_265.770_927_008_7,
            33_430.575_583_588_13,
            2_509.080_928_730_122_7,
        ];
        const B: [f64; 8] = [
            1.0,
            42.313_330_701_600_91,
            687.187_007_492_057_9,
            5_394.196_021_424_751,
            21_213.794_301_586_597,
            39_307.895_800_092_71,
            28_729.085_735_721_943,
            5_226.495_278_852_854_5,
        ];
        let r = 0.180625 - q * q;
        return Ok(q * poly(&A, r) / poly(&B, r));
    }

    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let value = if r <= 5.0 {
        const C: [f64; 8] = [
            1.423_437_110_749_683_5,
            4.630_337_846_156_545,
            5.769_497_221_460_691,
            3.647_848_324_763_204_5,
            1.270_458_252_452_368_4,
            0.241_780_725_177_450_6,
            0.022_723_844_989_269_184,
            7.745_450_142_783_414e-4,
        ];
        const D: [f64; 8] = [
            1.0,
            2.053_191_626_637_758_8,
            1.676_384_830_183_803_8,
            0.689_767_334_985_1,
            0.148_103_976_427_480_08,
            0.015_198_666_563_616_457,
            5.475_938_084_995_345e-4,
            1.050_750_071_644_416_9e-9,
        ];
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        const E: [f64; 8] = [
            6.657_904_643_501_103,
            5.463_784_911_164_114,
            1.784_826_539_917_291_3,
            0.296_560_571_828_504_87,
            0.026_532_189_526_576_124,
            0.001_242_660_947_388_078_4,
            2.711_555_568_743_487_6e-5,
            2.010_334_399_292_288_1e-7,
        ];
        const F: [f64; 8] = [
            1.0,
            0.599_832_206_555_887_9,
            0.136_929_880_922_735_8,
            0.014_875_361_290_850_615,
            7.868_691_311_456_133e-4,
            1.846_318_317_510_054_8e-5,
            1.421_511_758_316_446e-7,
            2.044_263_103_389_939_7e-15,
        ];
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    Ok(if q < 0.0 { -value } else { value })
}

fn poly(coeffs: &[f64; 8], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Base-stock level for SES-forecasted demand over `lead_time_total = l + 1`
/// periods, with the Graves inflation factor on the safety stock:
///
/// ```text
/// S = L f + z(target) sigma sqrt(L) sqrt(1 + alpha (L-1) + alpha^2 (L-1)(2L-1) / 6)
/// ```
///
/// With `alpha = 0` this is the textbook level `L f + z sigma sqrt(L)`.
pub fn graves_base_stock(
    f: f64,
    sigma: f64,
    alpha: f64,
    lead_time_total: u32,
    target_p1: f64,
) -> Result<f64, PolicyError> {
    if lead_time_total == 0 {
        return Err(PolicyError::InvalidLeadTime(lead_time_total));
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(PolicyError::InvalidParameter("sigma"));
    }
    if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
        return Err(PolicyError::InvalidParameter("alpha"));
    }
    let z = normal_quantile(target_p1)?;
    let lf = f64::from(lead_time_total);
    let correction = 1.0 + alpha * (lf - 1.0) + alpha * alpha * (lf - 1.0) * (2.0 * lf - 1.0) / 6.0;
    Ok(lf * f + z * sigma * lf.sqrt() * correction.sqrt())
}

/// Base-stock level from an empirical CDF of simulated lead-time demand.
///
/// Generates `scenario_count` demand scenarios of `lead_time_total` periods
/// from `state` (scenario `i` on substream `substream_seed(master_seed, i)`),
/// sums each into a lead-time demand, and returns the smallest sum whose
/// empirical CDF reaches `target_p1` (type-1 quantile). Deterministic for a
/// fixed seed regardless of worker count.
pub fn empirical_base_stock(
    state: &ForecastState<f64>,
    lead_time_total: u32,
    target_p1: f64,
    scenario_count: u32,
    master_seed: u64,
) -> Result<u64, PolicyError> {
    if !(target_p1 > 0.0 && target_p1 < 1.0) {
        return Err(PolicyError::InvalidTarget(target_p1));
    }
    if lead_time_total == 0 {
        return Err(PolicyError::InvalidLeadTime(lead_time_total));
    }
    if scenario_count == 0 {
        return Err(PolicyError::InvalidScenarioCount(scenario_count));
    }

    let results: Vec<Result<u64, DgpError>> = (0..scenario_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(master_seed, u64::from(i)));
            let mut fc = *state;
            let mut total = 0u64;
            for step in 1..=lead_time_total {
                let (d, updated) = dgp::next(&fc, &mut rng).map_err(|e| e.with_step(step))?;
                total += d;
                fc = updated;
            }
            Ok(total)
        })
        .collect();
    let mut sums = results.into_iter().collect::<Result<Vec<u64>, _>>()?;
    sums.sort_unstable();

    // Smallest rank m with m/n >= target, comparing in f64 exactly as the
    // empirical CDF is evaluated.
    let n = u64::from(scenario_count);
    let n_f = n as f64;
    let mut m = ((target_p1 * n_f).ceil() as u64).clamp(1, n);
    while m > 1 && (m - 1) as f64 / n_f >= target_p1 {
        m -= 1;
    }
    while (m as f64) / n_f < target_p1 {
        m += 1;
    }
    Ok(sums[(m - 1) as usize])
}

/// Order-up-to rule: `max(0, ceil(level) - inventory_position)`.
pub fn order_quantity(level: f64, inventory_position: i64) -> u64 {
    let diff = level.ceil() - inventory_position as f64;
    if diff > 0.0 {
        diff as u64
    } else {
        0
    }
}

/// Declarative description of a base-stock policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySpec {
    method: Method,
    target_p1: f64,
    lead_time_total: u32,
    scenario_count: u32,
    s2_recompute: S2Recompute,
}

impl PolicySpec {
    /// Validates and builds a policy description. `target_p1` must lie
    /// strictly in (0, 1) and `lead_time_total` must be at least 1.
    pub fn new(
        method: Method,
        target_p1: f64,
        lead_time_total: u32,
        scenario_count: u32,
        s2_recompute: S2Recompute,
    ) -> Result<Self, PolicyError> {
        if !(target_p1 > 0.0 && target_p1 < 1.0) {
            return Err(PolicyError::InvalidTarget(target_p1));
        }
        if lead_time_total == 0 {
            return Err(PolicyError::InvalidLeadTime(lead_time_total));
        }
        if scenario_count == 0 {
            return Err(PolicyError::InvalidScenarioCount(scenario_count));
        }
        Ok(PolicySpec { method, target_p1, lead_time_total, scenario_count, s2_recompute })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn target_p1(&self) -> f64 {
        self.target_p1
    }

    pub fn lead_time_total(&self) -> u32 {
        self.lead_time_total
    }

    /// Binds the spec to one simulation episode: freezes the S1a sigma from
    /// the initial state and attaches the scenario stream seed used by S2.
    pub fn for_episode(&self, init: &ForecastState<f64>, scenario_seed: u64) -> EpisodePolicy {
        EpisodePolicy {
            spec: *self,
            sigma_fixed: init.mse().sqrt(),
            scenario_seed,
            cached_level: None,
        }
    }
}

/// A base-stock policy bound to a running episode: queried once per period
/// with the current forecast state.
pub trait BaseStockPolicy {
    fn base_stock(&mut self, forecast: &ForecastState<f64>, period: u32) -> Result<f64, PolicyError>;
}

/// [`PolicySpec`] bound to an episode; see [`PolicySpec::for_episode`].
#[derive(Debug, Clone)]
pub struct EpisodePolicy {
    spec: PolicySpec,
    sigma_fixed: f64,
    scenario_seed: u64,
    cached_level: Option<f64>,
}

impl BaseStockPolicy for EpisodePolicy {
    fn base_stock(&mut self, forecast: &ForecastState<f64>, period: u32) -> Result<f64, PolicyError> {
        let spec = &self.spec;
        match spec.method {
            Method::S1a => graves_base_stock(
                forecast.mean(),
                self.sigma_fixed,
                forecast.alpha(),
                spec.lead_time_total,
                spec.target_p1,
            ),
            Method::S1b => graves_base_stock(
                forecast.mean(),
                forecast.mse().sqrt(),
                forecast.alpha(),
                spec.lead_time_total,
                spec.target_p1,
            ),
            Method::S2 => {
                if spec.s2_recompute == S2Recompute::Once {
                    if let Some(level) = self.cached_level {
                        return Ok(level);
                    }
                }
                let seed = substream_seed(self.scenario_seed, u64::from(period));
                let level = empirical_base_stock(
                    forecast,
                    spec.lead_time_total,
                    spec.target_p1,
                    spec.scenario_count,
                    seed,
                )? as f64;
                self.cached_level = Some(level);
                Ok(level)
            }
        }
    }
}
