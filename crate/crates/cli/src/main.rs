//! Command-line interface: distribution fitting, demand path generation,
//! inventory simulation, factorial experiments, and the ARIMA bias check.
//!
//! Exit codes: 0 on success, 2 on validation errors (bad arguments, schema
//! or feasibility failures), 1 on runtime errors (I/O, mid-run failures).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use demandsim::dgp;
use demandsim::distfit;
use demandsim::forecast::ForecastState;
use demandsim::harness::{self, HarnessError};
use demandsim::{DemandPath64, FittedDist64};

#[derive(Parser)]
#[command(
    name = "demandsim",
    version,
    about = "Integer demand generation consistent with exponential smoothing, \
             and base-stock inventory experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a discrete distribution to a mean and variance
    Fit {
        /// Target mean
        #[arg(long)]
        mean: f64,
        /// Target variance
        #[arg(long)]
        var: f64,
        /// Emit the record as JSON instead of key-value lines
        #[arg(long)]
        json: bool,
    },
    /// Generate demand paths and write them as CSV
    Generate {
        /// Initial mean forecast
        #[arg(long)]
        f1: f64,
        /// Initial MSE forecast
        #[arg(long)]
        mse1: f64,
        /// Smoothing constant for the mean
        #[arg(long)]
        alpha: f64,
        /// Smoothing constant for the MSE (defaults to alpha)
        #[arg(long)]
        beta: Option<f64>,
        /// Periods per path
        #[arg(long, default_value_t = 100)]
        horizon: u32,
        /// Number of paths
        #[arg(long, default_value_t = 1)]
        paths: u32,
        /// Master seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every replication of a single-cell config and write period records
    Simulate {
        /// JSON experiment config with a one-cell grid
        #[arg(long)]
        config: PathBuf,
        /// Output CSV file
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a factorial experiment config and write results.csv
    Experiment {
        /// JSON experiment config
        #[arg(long)]
        config: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate demand means of the integer DGP against the
    /// truncate-and-round ARIMA baseline
    BiasCheck {
        /// Initial mean forecast
        #[arg(long)]
        f1: f64,
        /// Demand standard deviation (MSE forecast is sigma^2)
        #[arg(long)]
        sigma: f64,
        /// Smoothing constant
        #[arg(long)]
        alpha: f64,
        /// Number of paths per generator
        #[arg(long, default_value_t = 10_000)]
        paths: u32,
        /// Periods per path
        #[arg(long, default_value_t = 100)]
        horizon: u32,
        /// Master seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct CliError {
    code: u8,
    message: String,
}

fn validation(message: impl Into<String>) -> CliError {
    CliError { code: 2, message: message.into() }
}

fn runtime(message: impl Into<String>) -> CliError {
    CliError { code: 1, message: message.into() }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        runtime(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Schema(_)
            | HarnessError::Feasibility { .. }
            | HarnessError::Validation(_)
            | HarnessError::NoRows => validation(e.to_string()),
            HarnessError::Episode { .. } | HarnessError::Io(_) => runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    init_worker_pool();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

/// Honors `DEMANDSIM_THREADS` as the worker-pool size.
fn init_worker_pool() {
    if let Ok(value) = std::env::var("DEMANDSIM_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        } else {
            eprintln!("warning: ignoring non-numeric DEMANDSIM_THREADS={value}");
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit { mean, var, json } => fit_command(mean, var, json),
        Command::Generate { f1, mse1, alpha, beta, horizon, paths, seed, out } => {
            generate_command(f1, mse1, alpha, beta.unwrap_or(alpha), horizon, paths, seed, out)
        }
        Command::Simulate { config, out } => simulate_command(&config, &out),
        Command::Experiment { config, out } => experiment_command(&config, &out),
        Command::BiasCheck { f1, sigma, alpha, paths, horizon, seed, out } => {
            bias_command(f1, sigma, alpha, paths, horizon, seed, out)
        }
    }
}

fn fit_command(mean: f64, var: f64, json: bool) -> Result<(), CliError> {
    let dist = distfit::fit(mean, var).map_err(|e| validation(e.to_string()))?;
    let (fitted_mean, fitted_var) = dist.moments();
    let mut fields: Vec<(&str, serde_json::Value)> =
        vec![("class", dist.class_tag().into())];
    match dist {
        FittedDist64::PointMass(k) => fields.push(("k", k.into())),
        FittedDist64::BinomialMixture { k, p, q } | FittedDist64::NegBinMixture { k, p, q } => {
            fields.extend([("k", k.into()), ("p", p.into()), ("q", q.into())]);
        }
        FittedDist64::Poisson { lambda } => fields.push(("lambda", lambda.into())),
        FittedDist64::GeometricMixture { p1, p2, q } => {
            fields.extend([("p1", p1.into()), ("p2", p2.into()), ("q", q.into())]);
        }
    }
    fields.extend([("mean", fitted_mean.into()), ("variance", fitted_var.into())]);

    let mut stdout = std::io::stdout().lock();
    if json {
        let body: Vec<String> = fields
            .iter()
            .map(|(key, value)| format!("{}:{value}", serde_json::Value::from(*key)))
            .collect();
        writeln!(stdout, "{{{}}}", body.join(","))?;
    } else {
        for (key, value) in fields {
            match value {
                serde_json::Value::String(s) => writeln!(stdout, "{key}: {s}")?,
                other => writeln!(stdout, "{key}: {other}")?,
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn generate_command(
    f1: f64,
    mse1: f64,
    alpha: f64,
    beta: f64,
    horizon: u32,
    paths: u32,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let init = ForecastState::new(f1, mse1, alpha, beta)
        .map_err(|e| validation(e.to_string()))?;
    if !init.is_feasible() {
        return Err(validation(format!(
            "initial state (f1={f1}, mse1={mse1}) admits no non-negative integer distribution"
        )));
    }
    if horizon == 0 || paths == 0 {
        return Err(validation("horizon and paths must be positive"));
    }
    let generated = dgp::batch(&init, horizon, paths, seed).map_err(|e| runtime(e.to_string()))?;

    let mut writer = open_output(out.as_deref())?;
    writeln!(writer, "path_id,t,demand,mu,sigma2,a,class")?;
    for (path_id, path) in generated.iter().enumerate() {
        write_demand_path(&mut writer, path_id as u64, path)?;
    }
    writer.flush()?;
    Ok(())
}

fn write_demand_path(
    writer: &mut impl Write,
    path_id: u64,
    path: &DemandPath64,
) -> Result<(), CliError> {
    for t in 0..path.len() {
        let mu = path.means[t];
        let sigma2 = path.variances[t];
        let (a, class) = describe_state(mu, sigma2);
        writeln!(
            writer,
            "{},{},{},{},{},{},{}",
            path_id,
            t + 1,
            path.demands[t],
            mu,
            sigma2,
            a,
            class
        )?;
    }
    Ok(())
}

/// Variability statistic and class tag of a recorded `(mu, sigma2)` state.
/// Recorded states were feasible when drawn, so the fit cannot fail.
fn describe_state(mu: f64, sigma2: f64) -> (f64, &'static str) {
    if mu < dgp::UNDERFLOW_GUARD && sigma2 < dgp::UNDERFLOW_GUARD {
        return (f64::NAN, "point_mass");
    }
    let a = distfit::variability(mu, sigma2).map_or(f64::NAN, |a| a);
    let class = distfit::fit(mu, sigma2).map_or("unknown", |d| d.class_tag());
    (a, class)
}

fn simulate_command(config: &Path, out: &Path) -> Result<(), CliError> {
    let config = harness::parse_config(&fs::read_to_string(config)?)?;
    let episodes = harness::run_simulation_records(&config)?;
    let mut writer = BufWriter::new(fs::File::create(out)?);
    let bytes = harness::write_period_records(&episodes, &mut writer)?;
    writer.flush()?;
    println!(
        "wrote {} periods across {} replications ({bytes} bytes) to {}",
        episodes.iter().map(|(_, r)| r.len()).sum::<usize>(),
        episodes.len(),
        out.display()
    );
    Ok(())
}

fn experiment_command(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let config = harness::parse_config(&fs::read_to_string(config_path)?)?;
    let rows = harness::run_experiment(&config);
    fs::create_dir_all(out_dir)?;
    let results_path = out_dir.join("results.csv");
    let bytes = harness::write_results_file(&config, &rows, &results_path)?;
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    println!(
        "wrote {} cells ({bytes} bytes) to {}",
        rows.len(),
        results_path.display()
    );
    for row in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: cell (case={}, alpha={}, l={}, p={}, {}) failed: {}",
            row.cell.case_index,
            row.cell.alpha,
            row.cell.lead_time,
            row.cell.penalty,
            row.cell.method.tag(),
            row.error.as_deref().unwrap_or("unknown")
        );
    }
    if failures > 0 {
        return Err(runtime(format!("{failures} cells failed")));
    }
    Ok(())
}

fn bias_command(
    f1: f64,
    sigma: f64,
    alpha: f64,
    paths: u32,
    horizon: u32,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let init = ForecastState::new(f1, sigma * sigma, alpha, alpha)
        .map_err(|e| validation(e.to_string()))?;
    if !init.is_feasible() {
        return Err(validation(format!(
            "initial state (f1={f1}, sigma={sigma}) admits no non-negative integer distribution"
        )));
    }
    if paths < 2 || horizon == 0 {
        return Err(validation("bias-check needs at least 2 paths and 1 period"));
    }
    let rows = dgp::bias_study(f1, sigma, alpha, paths, horizon, seed);
    let mut writer = open_output(out.as_deref())?;
    writeln!(writer, "t,dgp_mean,arima_mean,dgp_se,arima_se")?;
    for row in rows {
        writeln!(
            writer,
            "{},{},{},{},{}",
            row.t, row.dgp_mean, row.arima_mean, row.dgp_se, row.arima_se
        )?;
    }
    writer.flush()?;
    Ok(())
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(path) => Box::new(BufWriter::new(fs::File::create(path)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}
