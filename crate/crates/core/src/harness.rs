//! Config-driven factorial experiment runner: expands a grid of demand
//! cases, smoothing constants, lead times, penalties and policy methods,
//! runs independent replications per cell, and emits aggregated CSV rows.
//!
//! Seeding is arranged so that cells sharing a demand regime (case and
//! alpha) also share demand substreams per replication: comparisons across
//! penalties, lead times and methods are coupled through common random
//! numbers, while output order is the deterministic grid order.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;

use crate::dgp::{derive_seed, mean_se};
use crate::forecast::ForecastState;
use crate::inventory::{self, CostParams, PeriodRecord, RunMetrics};
use crate::policy::{Method, PolicySpec, S2Recompute};

/// Initial forecast pair defining a demand case.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub f1: f64,
    pub mse1: f64,
}

/// Warm-up window: `"2L"` (twice the total lead time, resolved per cell) or
/// an explicit number of periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WarmupSpec {
    #[default]
    TwoL,
    Fixed(u32),
}

impl WarmupSpec {
    /// Resolves the window for a cell with per-period lead time `l`
    /// (total lead time `L = l + 1`).
    pub fn resolve(&self, lead_time: u32) -> u32 {
        match self {
            WarmupSpec::TwoL => 2 * (lead_time + 1),
            WarmupSpec::Fixed(w) => *w,
        }
    }
}

impl<'de> Deserialize<'de> for WarmupSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Periods(u32),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Periods(w) => Ok(WarmupSpec::Fixed(w)),
            Raw::Text(s) if s == "2L" => Ok(WarmupSpec::TwoL),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "warmup must be \"2L\" or a non-negative integer, got \"{s}\""
            ))),
        }
    }
}

fn default_reps() -> u32 {
    10_000
}

fn default_horizon() -> u32 {
    100
}

fn default_scenario_count() -> u32 {
    10_000
}

/// Declarative factorial experiment description. Unknown keys are rejected.
///
/// The in-stock probability target of each cell is derived from its penalty
/// as `p / (p + h)`; the MSE smoothing constant is tied to `alpha`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cases: Vec<CaseSpec>,
    pub alphas: Vec<f64>,
    pub lead_times: Vec<u32>,
    pub penalties: Vec<f64>,
    pub holding_cost: f64,
    pub methods: Vec<Method>,
    #[serde(default = "default_reps")]
    pub reps: u32,
    #[serde(default = "default_horizon")]
    pub horizon: u32,
    #[serde(default)]
    pub warmup: WarmupSpec,
    #[serde(default = "default_scenario_count")]
    pub scenario_count: u32,
    #[serde(default)]
    pub s2_recompute: S2Recompute,
    #[serde(default)]
    pub master_seed: u64,
}

/// Error raised while parsing, validating or running an experiment.
#[derive(Debug)]
pub enum HarnessError {
    /// The config document does not match the schema; the message carries
    /// the offending field path.
    Schema(String),
    /// A demand case admits no distribution on the non-negative integers.
    Feasibility { index: usize, f1: f64, mse1: f64 },
    /// A structurally valid config with out-of-range values.
    Validation(String),
    /// A replication failed while simulating.
    Episode { rep: u32, message: String },
    /// Nothing to write.
    NoRows,
    Io(std::io::Error),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Schema(msg) => write!(f, "config schema error: {msg}"),
            HarnessError::Feasibility { index, f1, mse1 } => write!(
                f,
                "case {index} (f1={f1}, mse1={mse1}) admits no non-negative integer distribution"
            ),
            HarnessError::Validation(msg) => write!(f, "config validation error: {msg}"),
            HarnessError::Episode { rep, message } => {
                write!(f, "replication {rep} failed: {message}")
            }
            HarnessError::NoRows => f.write_str("no result rows to write"),
            HarnessError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e)
    }
}

/// Parses and validates a JSON experiment config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let mut deserializer = serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(&mut deserializer)
        .map_err(|e| HarnessError::Schema(format!("{}: {}", e.path(), e.inner())))?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |msg: &str| Err(HarnessError::Validation(msg.to_string()));
        if self.cases.is_empty()
            || self.alphas.is_empty()
            || self.lead_times.is_empty()
            || self.penalties.is_empty()
            || self.methods.is_empty()
        {
            return invalid("cases, alphas, lead_times, penalties and methods must be nonempty");
        }
        for (index, case) in self.cases.iter().enumerate() {
            let state = ForecastState::new(case.f1, case.mse1, self.alphas[0], self.alphas[0]);
            if state.map_or(true, |s| !s.is_feasible()) {
                return Err(HarnessError::Feasibility {
                    index,
                    f1: case.f1,
                    mse1: case.mse1,
                });
            }
        }
        if self.alphas.iter().any(|a| !a.is_finite() || *a <= 0.0 || *a > 1.0) {
            return invalid("every alpha must lie in (0, 1]");
        }
        if !self.holding_cost.is_finite() || self.holding_cost <= 0.0 {
            return invalid("holding_cost must be finite and positive");
        }
        if self.penalties.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return invalid("every penalty must be finite and positive");
        }
        if self.reps == 0 {
            return invalid("reps must be positive");
        }
        if self.scenario_count == 0 {
            return invalid("scenario_count must be positive");
        }
        for &l in &self.lead_times {
            if self.horizon <= self.warmup.resolve(l) {
                return Err(HarnessError::Validation(format!(
                    "horizon {} does not exceed the warm-up window {} for lead time {}",
                    self.horizon,
                    self.warmup.resolve(l),
                    l
                )));
            }
        }
        Ok(())
    }

    /// The default factorial grid: two low-volume, high-variability demand
    /// cases, three smoothing constants, three lead times, and three
    /// penalty levels (in-stock targets 0.9 / 0.95 / 0.99 with unit holding
    /// cost), across all three policy methods.
    pub fn default_grid() -> Self {
        ExperimentConfig {
            cases: vec![
                CaseSpec { f1: 2.0, mse1: 4.0 },
                CaseSpec { f1: 2.0, mse1: 9.0 },
            ],
            alphas: vec![0.02, 0.05, 0.1],
            lead_times: vec![1, 2, 4],
            penalties: vec![9.0, 19.0, 99.0],
            holding_cost: 1.0,
            methods: vec![Method::S1a, Method::S1b, Method::S2],
            reps: default_reps(),
            horizon: default_horizon(),
            warmup: WarmupSpec::TwoL,
            scenario_count: default_scenario_count(),
            s2_recompute: S2Recompute::EveryPeriod,
            master_seed: 0,
        }
    }

    /// Expands the factorial grid in deterministic output order
    /// (cases, then alphas, lead times, penalties, methods).
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for (case_index, case) in self.cases.iter().enumerate() {
            for (alpha_index, &alpha) in self.alphas.iter().enumerate() {
                for (lead_index, &lead_time) in self.lead_times.iter().enumerate() {
                    for (penalty_index, &penalty) in self.penalties.iter().enumerate() {
                        for (method_index, &method) in self.methods.iter().enumerate() {
                            cells.push(Cell {
                                case_index,
                                alpha_index,
                                lead_index,
                                penalty_index,
                                method_index,
                                f1: case.f1,
                                mse1: case.mse1,
                                alpha,
                                lead_time,
                                penalty,
                                target_p1: penalty / (penalty + self.holding_cost),
                                warmup: self.warmup.resolve(lead_time),
                                method,
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}

/// One resolved grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub case_index: usize,
    pub alpha_index: usize,
    pub lead_index: usize,
    pub penalty_index: usize,
    pub method_index: usize,
    pub f1: f64,
    pub mse1: f64,
    pub alpha: f64,
    pub lead_time: u32,
    pub penalty: f64,
    pub target_p1: f64,
    pub warmup: u32,
    pub method: Method,
}

/// Mean and standard error of a metric across replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

/// Replication-aggregated metrics of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub avg_cost: MeanSe,
    pub fill_rate: MeanSe,
    pub in_stock: MeanSe,
    pub avg_on_hand: MeanSe,
}

/// Result row for one cell; `stats` is absent when the cell failed, with the
/// failure described in `error`.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub stats: Option<CellStats>,
    pub error: Option<String>,
}

const DEMAND_STREAM: u64 = 1;
const POLICY_STREAM: u64 = 2;

/// Demand substream for one replication. Depends only on the demand regime
/// (case, alpha) and the replication, so cells differing in lead time,
/// penalty or method face identical demand paths under one master seed.
fn demand_seed(master: u64, cell: &Cell, rep: u32) -> u64 {
    derive_seed(
        master,
        &[
            DEMAND_STREAM,
            cell.case_index as u64,
            cell.alpha_index as u64,
            u64::from(rep),
        ],
    )
}

/// Scenario substream for the S2 policy; independent of the penalty so that
/// service-target comparisons stay coupled.
fn policy_seed(master: u64, cell: &Cell, rep: u32) -> u64 {
    derive_seed(
        master,
        &[
            POLICY_STREAM,
            cell.case_index as u64,
            cell.alpha_index as u64,
            cell.lead_index as u64,
            cell.method_index as u64,
            u64::from(rep),
        ],
    )
}

/// Runs every cell of the factorial grid with `reps` independent episodes
/// each. Per-cell failures are captured as flagged rows; other cells are
/// unaffected. Deterministic for a fixed master seed regardless of the
/// number of workers.
pub fn run_experiment(config: &ExperimentConfig) -> Vec<CellResult> {
    let cells = config.cells();
    cells.par_iter().map(|cell| run_cell(config, cell)).collect()
}

fn run_cell(config: &ExperimentConfig, cell: &Cell) -> CellResult {
    let episodes = run_cell_episodes(config, cell);
    let collected: Result<Vec<RunMetrics>, inventory::SimError> = episodes
        .into_iter()
        .map(|(_, outcome)| outcome.map(|(_, metrics)| metrics))
        .collect();
    match collected {
        Ok(metrics) => CellResult {
            cell: *cell,
            stats: Some(aggregate(&metrics)),
            error: None,
        },
        Err(e) => CellResult { cell: *cell, stats: None, error: Some(e.to_string()) },
    }
}

type EpisodeOutcome = Result<(Vec<PeriodRecord>, RunMetrics), inventory::SimError>;

/// Runs all replications of one cell, returning outcomes in replication
/// order (errors are reported for the lowest failing replication).
fn run_cell_episodes(config: &ExperimentConfig, cell: &Cell) -> Vec<(u32, EpisodeOutcome)> {
    let init = ForecastState::new(cell.f1, cell.mse1, cell.alpha, cell.alpha)
        .expect("config validation checked the forecast state");
    let costs = CostParams::new(config.holding_cost, cell.penalty)
        .expect("config validation checked the cost parameters");
    let spec = PolicySpec::new(
        cell.method,
        cell.target_p1,
        cell.lead_time + 1,
        config.scenario_count,
        config.s2_recompute,
    )
    .expect("config validation checked the policy parameters");

    (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let mut policy = spec.for_episode(&init, policy_seed(config.master_seed, cell, rep));
            let outcome = inventory::simulate(
                &mut policy,
                &init,
                &costs,
                cell.lead_time,
                config.horizon,
                cell.warmup,
                demand_seed(config.master_seed, cell, rep),
            );
            (rep, outcome)
        })
        .collect()
}

/// Runs the single cell of a one-cell config and returns the per-period
/// records of every replication, in replication order.
pub fn run_simulation_records(
    config: &ExperimentConfig,
) -> Result<Vec<(u32, Vec<PeriodRecord>)>, HarnessError> {
    let cells = config.cells();
    if cells.len() != 1 {
        return Err(HarnessError::Validation(format!(
            "period-record simulation requires a single-cell config, this grid has {} cells",
            cells.len()
        )));
    }
    run_cell_episodes(config, &cells[0])
        .into_iter()
        .map(|(rep, outcome)| match outcome {
            Ok((records, _)) => Ok((rep, records)),
            Err(e) => Err(HarnessError::Episode { rep, message: e.to_string() }),
        })
        .collect()
}

fn aggregate(metrics: &[RunMetrics]) -> CellStats {
    let stat = |select: fn(&RunMetrics) -> f64| {
        let (mean, se) = mean_se(metrics.iter().map(select));
        MeanSe { mean, se }
    };
    CellStats {
        avg_cost: stat(|m| m.avg_cost),
        fill_rate: stat(|m| m.fill_rate),
        in_stock: stat(|m| m.in_stock),
        avg_on_hand: stat(|m| m.avg_on_hand),
    }
}

/// Header of the experiment results CSV.
pub const RESULTS_HEADER: &str = "case_f1,case_mse1,alpha,lead_time,penalty,target_p1,method,\
avg_cost,avg_cost_se,fill_rate,fill_rate_se,in_stock,in_stock_se,avg_on_hand,avg_on_hand_se,\
reps,horizon,warmup,seed";

/// Header of the per-period records CSV.
pub const RECORDS_HEADER: &str = "rep_id,t,d,d_s,q,I,b,cost,stockout";

/// Formats `x` with `sig` significant digits, `%g`-style: decimal notation
/// in a moderate exponent range, scientific otherwise, trailing zeros
/// trimmed.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    debug_assert!(sig >= 1);
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-4..sig as i32).contains(&exponent) {
        let decimals = (sig as i32 - 1 - exponent).max(0) as usize;
        trim_decimal(format!("{x:.decimals$}"))
    } else {
        let formatted = format!("{:.*e}", sig - 1, x);
        let (mantissa, exp) = formatted.split_once('e').expect("scientific format");
        format!("{}e{}", trim_decimal(mantissa.to_string()), exp)
    }
}

fn trim_decimal(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn f6(x: f64) -> String {
    fmt_sig(x, 6)
}

/// Writes the results CSV (header plus one row per cell, LF line endings,
/// floats at 6 significant digits) and returns the number of bytes written.
/// Failed cells carry `NaN` metrics.
pub fn write_results<W: Write>(
    config: &ExperimentConfig,
    rows: &[CellResult],
    writer: &mut W,
) -> std::io::Result<u64> {
    let nan = MeanSe { mean: f64::NAN, se: f64::NAN };
    let nan_stats = CellStats { avg_cost: nan, fill_rate: nan, in_stock: nan, avg_on_hand: nan };

    let mut out = String::with_capacity(128 * (rows.len() + 1));
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for row in rows {
        let cell = &row.cell;
        let stats = row.stats.unwrap_or(nan_stats);
        let fields = [
            f6(cell.f1),
            f6(cell.mse1),
            f6(cell.alpha),
            cell.lead_time.to_string(),
            f6(cell.penalty),
            f6(cell.target_p1),
            cell.method.tag().to_string(),
            f6(stats.avg_cost.mean),
            f6(stats.avg_cost.se),
            f6(stats.fill_rate.mean),
            f6(stats.fill_rate.se),
            f6(stats.in_stock.mean),
            f6(stats.in_stock.se),
            f6(stats.avg_on_hand.mean),
            f6(stats.avg_on_hand.se),
            config.reps.to_string(),
            config.horizon.to_string(),
            cell.warmup.to_string(),
            config.master_seed.to_string(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    writer.write_all(out.as_bytes())?;
    Ok(out.len() as u64)
}

/// Writes the results CSV to a file, refusing to create the file for an
/// empty row set.
pub fn write_results_file<P: AsRef<Path>>(
    config: &ExperimentConfig,
    rows: &[CellResult],
    path: P,
) -> Result<u64, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::NoRows);
    }
    let mut file = std::fs::File::create(path)?;
    let bytes = write_results(config, rows, &mut file)?;
    Ok(bytes)
}

/// Writes the per-period records CSV (`rep_id,t,d,d_s,q,I,b,cost,stockout`).
pub fn write_period_records<W: Write>(
    episodes: &[(u32, Vec<PeriodRecord>)],
    writer: &mut W,
) -> std::io::Result<u64> {
    let mut out = String::new();
    out.push_str(RECORDS_HEADER);
    out.push('\n');
    for (rep, records) in episodes {
        for r in records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                rep,
                r.t,
                r.demand,
                r.satisfied,
                r.order,
                r.on_hand,
                r.backorders,
                f6(r.cost),
                u8::from(r.stockout)
            ));
        }
    }
    writer.write_all(out.as_bytes())?;
    Ok(out.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "cases": [{"f1": 2.0, "mse1": 4.0}],
        "alphas": [0.1],
        "lead_times": [2],
        "penalties": [19.0],
        "holding_cost": 1.0,
        "methods": ["s2"]
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let config = parse_config(MINIMAL).unwrap();
        assert_eq!(config.reps, 10_000);
        assert_eq!(config.horizon, 100);
        assert_eq!(config.scenario_count, 10_000);
        assert_eq!(config.warmup, WarmupSpec::TwoL);
        assert_eq!(config.s2_recompute, S2Recompute::EveryPeriod);
        assert_eq!(config.master_seed, 0);

        let cells = config.cells();
        assert_eq!(cells.len(), 1);
        assert!((cells[0].target_p1 - 0.95).abs() < 1e-12);
        assert_eq!(cells[0].warmup, 6);
        assert_eq!(cells[0].method, Method::S2);
    }

    #[test]
    fn infeasible_case_is_rejected_by_name() {
        let text = MINIMAL.replace(
            r#"[{"f1": 2.0, "mse1": 4.0}]"#,
            r#"[{"f1": 2.0, "mse1": 4.0}, {"f1": 0.5, "mse1": 0.2}]"#,
        );
        match parse_config(&text) {
            Err(HarnessError::Feasibility { index: 1, f1, mse1 }) => {
                assert_eq!((f1, mse1), (0.5, 0.2));
            }
            other => panic!("expected feasibility error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_and_methods_are_schema_errors() {
        let text = MINIMAL.replace("\"methods\": [\"s2\"]", "\"methods\": [\"s3\"]");
        assert!(matches!(parse_config(&text), Err(HarnessError::Schema(_))));

        let text = MINIMAL.replace("\"holding_cost\": 1.0", "\"holding_cost\": 1.0, \"typo\": 3");
        match parse_config(&text) {
            Err(HarnessError::Schema(msg)) => assert!(msg.contains("typo"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn schema_errors_carry_field_paths() {
        let text = MINIMAL.replace("\"mse1\": 4.0", "\"mse1\": \"four\"");
        match parse_config(&text) {
            Err(HarnessError::Schema(msg)) => {
                assert!(msg.contains("cases[0].mse1"), "{msg}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn warmup_accepts_2l_or_integer() {
        let explicit = MINIMAL.replace("\"methods\": [\"s2\"]", "\"methods\": [\"s2\"], \"warmup\": 7");
        assert_eq!(parse_config(&explicit).unwrap().warmup, WarmupSpec::Fixed(7));
        let tagged =
            MINIMAL.replace("\"methods\": [\"s2\"]", "\"methods\": [\"s2\"], \"warmup\": \"2L\"");
        assert_eq!(parse_config(&tagged).unwrap().warmup, WarmupSpec::TwoL);
        let bad = MINIMAL.replace("\"methods\": [\"s2\"]", "\"methods\": [\"s2\"], \"warmup\": \"3L\"");
        assert!(matches!(parse_config(&bad), Err(HarnessError::Schema(_))));
    }

    #[test]
    fn horizon_must_exceed_warmup() {
        let text =
            MINIMAL.replace("\"methods\": [\"s2\"]", "\"methods\": [\"s2\"], \"horizon\": 6");
        assert!(matches!(parse_config(&text), Err(HarnessError::Validation(_))));
    }

    #[test]
    fn grid_is_complete_and_ordered() {
        let config = ExperimentConfig::default_grid();
        let cells = config.cells();
        assert_eq!(cells.len(), 2 * 3 * 3 * 3 * 3);
        // methods vary fastest, cases slowest
        assert_eq!(cells[0].method, Method::S1a);
        assert_eq!(cells[1].method, Method::S1b);
        assert_eq!(cells[2].method, Method::S2);
        assert_eq!(cells[0].case_index, 0);
        assert_eq!(cells.last().unwrap().case_index, 1);
    }

    #[test]
    fn deterministic_cell_matches_hand_simulation() {
        // Point-mass demand at 3, l = 1, sigma = 0: the base-stock level is
        // L * f = 6; after the transient every period satisfies demand
        // exactly with zero stock, so all measured metrics are degenerate.
        let text = r#"{
            "cases": [{"f1": 3.0, "mse1": 0.0}],
            "alphas": [0.1],
            "lead_times": [1],
            "penalties": [19.0],
            "holding_cost": 1.0,
            "methods": ["s1a", "s1b", "s2"],
            "reps": 2,
            "horizon": 10,
            "scenario_count": 50
        }"#;
        let config = parse_config(text).unwrap();
        let rows = run_experiment(&config);
        assert_eq!(rows.len(), 3);
        for row in rows {
            let stats = row.stats.expect("cell runs");
            assert_eq!(stats.avg_cost.mean, 0.0);
            assert_eq!(stats.avg_cost.se, 0.0);
            assert_eq!(stats.fill_rate.mean, 1.0);
            assert_eq!(stats.in_stock.mean, 1.0);
            assert_eq!(stats.avg_on_hand.mean, 0.0);
        }
    }

    #[test]
    fn editing_one_cell_leaves_others_untouched() {
        let base = r#"{
            "cases": [{"f1": 2.0, "mse1": 4.0}],
            "alphas": [0.1],
            "lead_times": [1],
            "penalties": [9.0, 19.0],
            "holding_cost": 1.0,
            "methods": ["s1a"],
            "reps": 40,
            "horizon": 30,
            "master_seed": 5
        }"#;
        let edited = base.replace("19.0", "25.0");
        let rows_a = run_experiment(&parse_config(base).unwrap());
        let rows_b = run_experiment(&parse_config(&edited).unwrap());
        // the p = 9 cell is bitwise unaffected by the other penalty edit
        assert_eq!(rows_a[0].stats.unwrap(), rows_b[0].stats.unwrap());
    }

    #[test]
    fn results_csv_shape_and_round_trip() {
        let config = parse_config(
            &MINIMAL.replace("\"methods\": [\"s2\"]", "\"methods\": [\"s1a\"], \"reps\": 3, \"horizon\": 20"),
        )
        .unwrap();
        let rows = run_experiment(&config);
        let mut buf = Vec::new();
        let bytes = write_results(&config, &rows, &mut buf).unwrap();
        assert_eq!(bytes as usize, buf.len());
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], RESULTS_HEADER);
        assert!(!text.contains('\r'));

        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields.len(), RESULTS_HEADER.split(',').count());
        let fill: f64 = fields[9].parse().unwrap();
        let expect = rows[0].stats.unwrap().fill_rate.mean;
        assert!((fill - expect).abs() <= 5e-6 * expect.abs().max(1e-300));
    }

    #[test]
    fn empty_rows_refuse_to_write() {
        let config = ExperimentConfig::default_grid();
        let dir = std::env::temp_dir().join("demandsim_empty_rows_test");
        let path = dir.join("results.csv");
        let _ = std::fs::remove_file(&path);
        assert!(matches!(
            write_results_file(&config, &[], &path),
            Err(HarnessError::NoRows)
        ));
        assert!(!path.exists());
    }

    #[test]
    fn fmt_sig_covers_the_documented_shapes() {
        assert_eq!(fmt_sig(0.0, 6), "0");
        assert_eq!(fmt_sig(1.0, 6), "1");
        assert_eq!(fmt_sig(0.95, 6), "0.95");
        assert_eq!(fmt_sig(12.284975, 6), "12.285");
        assert_eq!(fmt_sig(123456.7, 6), "123457");
        assert_eq!(fmt_sig(1234567.0, 6), "1.23457e6");
        assert_eq!(fmt_sig(0.0001234567, 6), "0.000123457");
        assert_eq!(fmt_sig(0.00001234567, 6), "1.23457e-5");
        assert_eq!(fmt_sig(-0.5, 6), "-0.5");
        assert_eq!(fmt_sig(f64::NAN, 6), "NaN");
    }

    #[test]
    fn fmt_sig_round_trips_to_six_digits() {
        let values = [0.123456789, 1.5e-7, 3.0, 99999.99, 7.123456e12, 0.9512345];
        for &x in &values {
            let parsed: f64 = fmt_sig(x, 6).parse().unwrap();
            assert!((parsed - x).abs() <= 5e-6 * x.abs(), "{x} -> {parsed}");
        }
    }
}
