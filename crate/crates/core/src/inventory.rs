//! Periodic-review inventory simulation with full backlogging, deterministic
//! lead time, and dynamic base-stock ordering.
//!
//! Within each period the order of events is: place the replenishment order,
//! receive the pipeline head, observe and satisfy demand (backorders first),
//! incur holding/penalty costs on the end-of-period state, then update the
//! demand forecast. An order placed with lead time `l` therefore covers
//! `l + 1` periods of demand exposure.

use std::collections::VecDeque;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dgp::{self, DgpError};
use crate::forecast::ForecastState;
use crate::policy::{order_quantity, BaseStockPolicy, PolicyError};

/// On-hand stock, backorders, and the pipeline of outstanding orders
/// (`pipeline[i]` arrives in `i + 1` periods; its length always equals the
/// lead time).
///
/// On-hand stock and backorders are mutually exclusive: at most one of them
/// is positive after every step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InventoryState {
    on_hand: u64,
    backorders: u64,
    pipeline: VecDeque<u64>,
}

impl InventoryState {
    /// Empty starting state: zero stock, zero backorders, an all-zero
    /// pipeline of length `lead_time`.
    pub fn new(lead_time: u32) -> Self {
        InventoryState {
            on_hand: 0,
            backorders: 0,
            pipeline: std::iter::repeat_n(0, lead_time as usize).collect(),
        }
    }

    pub fn with_contents(on_hand: u64, backorders: u64, pipeline: &[u64]) -> Self {
        InventoryState { on_hand, backorders, pipeline: pipeline.iter().copied().collect() }
    }

    pub fn on_hand(&self) -> u64 {
        self.on_hand
    }

    pub fn backorders(&self) -> u64 {
        self.backorders
    }

    pub fn pipeline(&self) -> impl Iterator<Item = u64> + '_ {
        self.pipeline.iter().copied()
    }

    /// Net inventory plus everything on order:
    /// `on_hand - backorders + sum(pipeline)`. May be negative.
    pub fn inventory_position(&self) -> i64 {
        self.on_hand as i64 - self.backorders as i64
            + self.pipeline.iter().map(|&q| q as i64).sum::<i64>()
    }
}

/// Holding cost and backorder penalty per unit per period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    holding: f64,
    penalty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InvalidCosts;

impl fmt::Display for InvalidCosts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("holding cost and penalty must be finite and positive")
    }
}

impl std::error::Error for InvalidCosts {}

impl CostParams {
    pub fn new(holding: f64, penalty: f64) -> Result<Self, InvalidCosts> {
        if holding.is_finite() && penalty.is_finite() && holding > 0.0 && penalty > 0.0 {
            Ok(CostParams { holding, penalty })
        } else {
            Err(InvalidCosts)
        }
    }

    pub fn holding(&self) -> f64 {
        self.holding
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }
}

/// Everything observed in one simulated period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodRecord {
    pub t: u32,
    pub demand: u64,
    /// Demand satisfied immediately this period (backorders are cleared
    /// first and do not count).
    pub satisfied: u64,
    pub order: u64,
    pub on_hand: u64,
    pub backorders: u64,
    pub cost: f64,
    /// True when demand plus outstanding backorders exceeded the stock
    /// available this period, i.e. the period ends with backorders.
    pub stockout: bool,
}

/// Advances one period: the placed `order` joins the pipeline tail, the
/// pipeline head arrives before demand, backorders are cleared first, then
/// `demand` is satisfied from what remains; costs accrue on the
/// end-of-period state. All-integer arithmetic.
pub fn step(
    state: &InventoryState,
    t: u32,
    order: u64,
    demand: u64,
    costs: &CostParams,
) -> (InventoryState, PeriodRecord) {
    let mut pipeline = state.pipeline.clone();
    pipeline.push_back(order);
    let arriving = pipeline.pop_front().expect("pipeline nonempty after push");

    let available = state.on_hand + arriving;
    let net = available as i64 - state.backorders as i64 - demand as i64;
    let on_hand = net.max(0) as u64;
    let backorders = (-net).max(0) as u64;
    let satisfied = demand.min(available.saturating_sub(state.backorders));
    let cost = costs.holding * on_hand as f64 + costs.penalty * backorders as f64;

    let record = PeriodRecord {
        t,
        demand,
        satisfied,
        order,
        on_hand,
        backorders,
        cost,
        stockout: backorders > 0,
    };
    (InventoryState { on_hand, backorders, pipeline }, record)
}

/// Aggregate service and cost statistics of one episode, measured after the
/// warm-up window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    /// Mean per-period cost.
    pub avg_cost: f64,
    /// Satisfied demand over total demand (ratio of sums).
    pub fill_rate: f64,
    /// Fraction of periods ending without backorders.
    pub in_stock: f64,
    /// Mean end-of-period on-hand stock.
    pub avg_on_hand: f64,
    /// Set when the measured window saw zero total demand, in which case the
    /// fill rate is reported as 1.
    pub zero_demand_window: bool,
}

/// Computes [`RunMetrics`] over the records with `t > warmup`.
///
/// Panics if no record falls after the warm-up; callers validate
/// `horizon > warmup` up front.
pub fn summarize(records: &[PeriodRecord], warmup: u32) -> RunMetrics {
    let mut n = 0u64;
    let mut cost_sum = 0.0;
    let mut in_stock_count = 0u64;
    let mut on_hand_sum = 0u64;
    let mut demand_sum = 0u64;
    let mut satisfied_sum = 0u64;
    for r in records.iter().filter(|r| r.t > warmup) {
        n += 1;
        cost_sum += r.cost;
        in_stock_count += u64::from(!r.stockout);
        on_hand_sum += r.on_hand;
        demand_sum += r.demand;
        satisfied_sum += r.satisfied;
    }
    assert!(n > 0, "no periods after the warm-up window");

    let n_f = n as f64;
    let (fill_rate, zero_demand_window) = if demand_sum == 0 {
        (1.0, true)
    } else {
        (satisfied_sum as f64 / demand_sum as f64, false)
    };
    RunMetrics {
        avg_cost: cost_sum / n_f,
        fill_rate,
        in_stock: in_stock_count as f64 / n_f,
        avg_on_hand: on_hand_sum as f64 / n_f,
        zero_demand_window,
    }
}

/// Error from a simulation episode.
#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    /// The policy failed to produce a base-stock level.
    Policy(PolicyError),
    /// Demand generation hit an infeasible forecast state.
    Demand(DgpError),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Policy(e) => write!(f, "policy failure: {e}"),
            SimError::Demand(e) => write!(f, "demand failure: {e}"),
        }
    }
}

impl std::error::Error for SimError {}

/// Runs one episode of `horizon` periods starting from zero inventory and an
/// empty pipeline. Each period the policy sets the base-stock level from the
/// current forecast state, the order-up-to rule places an order, one demand
/// is drawn from the DGP, the inventory steps forward, and the forecast is
/// updated with the observed demand.
///
/// Demand is drawn from a dedicated stream seeded with `demand_seed`, so an
/// identical configuration and seed reproduces the episode exactly.
///
/// Panics if `horizon <= warmup`.
pub fn simulate<P: BaseStockPolicy>(
    policy: &mut P,
    init_forecast: &ForecastState<f64>,
    costs: &CostParams,
    lead_time: u32,
    horizon: u32,
    warmup: u32,
    demand_seed: u64,
) -> Result<(Vec<PeriodRecord>, RunMetrics), SimError> {
    assert!(horizon > warmup, "horizon must exceed the warm-up window");
    let mut rng = ChaCha8Rng::seed_from_u64(demand_seed);
    let mut state = InventoryState::new(lead_time);
    let mut forecast = *init_forecast;
    let mut records = Vec::with_capacity(horizon as usize);

    for t in 1..=horizon {
        let level = policy.base_stock(&forecast, t).map_err(SimError::Policy)?;
        let order = order_quantity(level, state.inventory_position());
        let (demand, updated) =
            dgp::next(&forecast, &mut rng).map_err(|e| SimError::Demand(e.with_step(t)))?;
        let (next_state, record) = step(&state, t, order, demand, costs);
        records.push(record);
        state = next_state;
        forecast = updated;
    }
    let metrics = summarize(&records, warmup);
    Ok((records, metrics))
}
