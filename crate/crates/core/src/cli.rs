//! Command-line front end.
//!
//! Every command reads a JSON run configuration:
//!
//! ```json
//! {
//!   "market": { "mu": 0.026, "sigma": 0.25, "r": 0.03 },
//!   "tax": { "alpha": 0.3, "p0": 100.0 },
//!   "horizon_t": 3.0,
//!   "x0": 180.0,
//!   "grid": { "n_x": 801, "n_t": 600 },
//!   "lattice": { "n_steps": 2000 },
//!   "mc": { "n_paths": 100000, "n_steps": 600, "seed": 42 },
//!   "outputs": { "format": "json", "paths": { "result": "out.json" } }
//! }
//! ```
//!
//! `grid`, `lattice`, `mc` and `outputs` are optional. Exit codes: 0 success,
//! 2 invalid configuration or arguments, 3 solver failure, 4 a boundary was
//! requested for a problem without a free boundary.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, Method, SolveOptions, SweepReport, TimingOptionReport};
use crate::boundary::Boundary;
use crate::error::Error;
use crate::lattice::{solve_lattice, LatticeConfig};
use crate::model::{classify_regime, threshold_f, MarketParams, ProblemSpec, Regime, TaxParams};
use crate::montecarlo::{evaluate_policy, simulate_paths, Execution, McEstimate, StoppingPolicy};
use crate::pde::{smooth_fit_residual, time_grid, GridConfig, SmoothFitSummary, SolverDiagnostics, DEFAULT_EPS_STOP};
use crate::sigma0::{Sigma0Solution, StopDecision};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketParams,
    pub tax: TaxParams,
    pub horizon_t: f64,
    pub x0: f64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub lattice: LatticeConfig,
    /// Monte Carlo check of the boundary policy; skipped by `solve` when absent.
    #[serde(default)]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            n_steps: 600,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    /// `solve` writes the boundary table instead of the result document.
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub format: OutputFormat,
    pub paths: OutputPaths,
}

/// Output files; standard output when absent. Command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub result: Option<PathBuf>,
    pub boundary_csv: Option<PathBuf>,
    /// Directory for the per-volatility boundary tables of `sweep`.
    pub sweep_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_spec(spec: &ProblemSpec) -> Self {
        Self {
            market: spec.market,
            tax: spec.tax,
            horizon_t: spec.horizon_t,
            x0: spec.x0,
            grid: GridConfig::default(),
            lattice: LatticeConfig::default(),
            mc: None,
            outputs: OutputConfig::default(),
        }
    }

    pub fn spec(&self) -> ProblemSpec {
        ProblemSpec {
            market: self.market,
            tax: self.tax,
            horizon_t: self.horizon_t,
            x0: self.x0,
        }
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        self.spec().validate()?;
        self.grid.validate()?;
        if self.lattice.n_steps == 0 {
            return Err(Error::InvalidParameter {
                field: "lattice.n_steps",
                reason: "must be at least 1".into(),
            });
        }
        if let Some(mc) = &self.mc {
            if mc.n_paths == 0 || mc.n_paths % 2 != 0 {
                return Err(Error::InvalidParameter {
                    field: "mc.n_paths",
                    reason: format!("must be positive and even, got {}", mc.n_paths),
                });
            }
            if mc.n_steps == 0 {
                return Err(Error::InvalidParameter {
                    field: "mc.n_steps",
                    reason: "must be at least 1".into(),
                });
            }
        }
        Ok(())
    }

    /// Parses and validates a configuration; errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.into_inner()))
        })?;
        config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            grid: self.grid,
            eps_stop: DEFAULT_EPS_STOP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(#[from] Error),
    #[error("{0}")]
    Degenerate(String),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => EXIT_CONFIG,
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Degenerate(_) => EXIT_DEGENERATE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodValue {
    pub method: Method,
    pub v0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub n_x: usize,
    pub n_t: usize,
    pub s_lo: f64,
    pub s_hi: f64,
}

/// Wall-clock timings in seconds; the only nondeterministic part of a document.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Runtimes {
    pub solve: f64,
    pub lattice: f64,
    pub monte_carlo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub grid: GridSummary,
    pub solver: SolverDiagnostics,
    pub lattice_steps: Option<usize>,
    pub runtimes: Runtimes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSection {
    pub policy: String,
    pub estimate: McEstimate,
}

/// Everything `solve` reports about one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub tool: String,
    pub version: String,
    pub regime: Regime,
    /// Root of the running payoff; absent when infinite.
    pub threshold_f: Option<f64>,
    /// The first entry is the primary method used for the boundary.
    pub values: Vec<MethodValue>,
    pub boundary: Boundary,
    pub smooth_fit: Option<SmoothFitSummary>,
    pub timing_option: TimingOptionReport,
    pub monte_carlo: Option<MonteCarloSection>,
    pub diagnostics: Diagnostics,
    pub config: RunConfig,
}

impl ResultDocument {
    /// Copy with the wall-clock timings zeroed, for reproducibility comparisons.
    pub fn without_runtimes(&self) -> Self {
        let mut doc = self.clone();
        doc.diagnostics.runtimes = Runtimes::default();
        doc
    }

    pub fn primary_v0(&self) -> f64 {
        self.values[0].v0
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn build_result_document(config: &RunConfig, exec: Execution) -> Result<ResultDocument, CliError> {
    let spec = config.spec();
    let clock = Instant::now();
    let solution = analysis::solve(&spec, &config.solve_options())?;
    let mut runtimes = Runtimes {
        solve: clock.elapsed().as_secs_f64(),
        ..Runtimes::default()
    };

    let mut values = vec![MethodValue {
        method: solution.method,
        v0: solution.v0,
    }];
    let mut lattice_steps = None;
    if spec.market.sigma > 0.0 {
        let clock = Instant::now();
        let lattice = solve_lattice(&spec, config.lattice)?;
        runtimes.lattice = clock.elapsed().as_secs_f64();
        values.push(MethodValue {
            method: Method::Lattice,
            v0: lattice.value_root,
        });
        lattice_steps = Some(lattice.n_steps);
    }

    let smooth_fit = if solution.method == Method::Pde {
        Some(SmoothFitSummary::from_points(&smooth_fit_residual(&solution.surface, &solution.boundary)?))
    } else {
        None
    };
    let timing_option = analysis::timing_option_value(&spec, &solution.estimate())?;

    let monte_carlo = match config.mc {
        Some(mc) => {
            let clock = Instant::now();
            let batch = simulate_paths(&spec, mc.n_paths, mc.n_steps, mc.seed)?;
            let estimate = evaluate_policy(&batch, &StoppingPolicy::Boundary(solution.boundary.clone()), &spec, exec);
            runtimes.monte_carlo = clock.elapsed().as_secs_f64();
            Some(MonteCarloSection {
                policy: "boundary".into(),
                estimate,
            })
        }
        None => None,
    };

    let prices = &solution.surface.log_prices;
    Ok(ResultDocument {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        regime: solution.regime,
        threshold_f: finite(threshold_f(&spec)),
        values,
        boundary: solution.boundary,
        smooth_fit,
        timing_option,
        monte_carlo,
        diagnostics: Diagnostics {
            grid: GridSummary {
                n_x: solution.surface.n_x(),
                n_t: solution.surface.n_t(),
                s_lo: prices[0].exp(),
                s_hi: prices[prices.len() - 1].exp(),
            },
            solver: solution.surface.diagnostics.clone(),
            lattice_steps,
            runtimes,
        },
        config: config.clone(),
    })
}

/// Decimal rendering rounded to 9 significant digits.
pub fn format_sig9(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// `t,boundary` table with one row per time node, LF line endings.
pub fn boundary_csv(boundary: &Boundary) -> String {
    let mut out = String::from("t,boundary\n");
    for (t, b) in boundary.times.iter().zip(&boundary.levels) {
        writeln!(out, "{},{}", format_sig9(*t), format_sig9(*b)).unwrap();
    }
    out
}

/// Inverse of [`boundary_csv`].
pub fn parse_boundary_csv(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut lines = text.lines();
    if lines.next() != Some("t,boundary") {
        return Err("missing `t,boundary` header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let (t, b) = line.split_once(',').ok_or_else(|| format!("row {}: expected two columns", i + 1))?;
            let parse = |s: &str| s.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1));
            Ok((parse(t)?, parse(b)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDocument {
    pub regime: Regime,
    pub threshold_f: Option<f64>,
    /// `sigma = 0` boundary on the configured time grid, including the limit at `T`.
    pub boundary: Boundary,
    pub v0: f64,
    pub decision_at_x0: StopDecision,
    pub config: RunConfig,
}

pub fn build_oracle_document(config: &RunConfig) -> OracleDocument {
    let spec = config.spec();
    let oracle = Sigma0Solution::new(spec);
    let times = time_grid(spec.horizon_t, config.grid.n_t);
    let levels = times.iter().map(|&t| oracle.boundary_at(t)).collect();
    OracleDocument {
        regime: oracle.regime(),
        threshold_f: finite(threshold_f(&spec)),
        boundary: Boundary::with_tolerance(times, levels, oracle.regime(), |_| 0.0),
        v0: oracle.value_at(0.0, spec.x0),
        decision_at_x0: oracle.decide(0.0, spec.x0),
        config: config.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    /// Sell at time zero.
    Now,
    /// Hold to the horizon.
    Maturity,
    /// Sell at the first grid time below the solved boundary.
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ExecutionArg {
    Serial,
    #[default]
    Parallel,
}

impl From<ExecutionArg> for Execution {
    fn from(e: ExecutionArg) -> Self {
        match e {
            ExecutionArg::Serial => Execution::Serial,
            ExecutionArg::Parallel => Execution::Parallel,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "taxstop", version, about = "Optimal selling time of a stock under capital gains taxes")]
pub struct Cli {
    /// Run Monte Carlo and sweeps on one thread or across the thread pool; results are identical.
    #[arg(long, value_enum, default_value_t = ExecutionArg::Parallel, global = true)]
    pub execution: ExecutionArg,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the problem and write the result document.
    Solve {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the exercise boundary as a `t,boundary` CSV table.
    Boundary {
        config: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Estimate the expected terminal wealth of a selling policy by simulation.
    Simulate {
        config: PathBuf,
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve for several volatilities and check monotonicity.
    Sweep {
        config: PathBuf,
        /// Comma-separated ascending volatilities.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        sigma: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv_dir: Option<PathBuf>,
    },
    /// Closed-form boundary and value for a deterministic stock.
    Oracle {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Output(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Output(e.to_string())),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("documents serialize");
    text.push('\n');
    text
}

fn require_free_boundary(spec: &ProblemSpec) -> Result<(), CliError> {
    match classify_regime(spec) {
        Regime::FreeBoundary => Ok(()),
        Regime::SellImmediately => Err(CliError::Degenerate(
            "no free boundary: mu <= (1 - alpha) r, so selling immediately is optimal at every price".into(),
        )),
        Regime::HoldToMaturity => Err(CliError::Degenerate(
            "no free boundary: without tax it is optimal to hold until the horizon".into(),
        )),
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let exec = cli.execution.into();
    match &cli.command {
        Command::Solve { config, out } => {
            let config = RunConfig::load(config)?;
            let doc = build_result_document(&config, exec)?;
            match config.outputs.format {
                OutputFormat::Json => {
                    let path = out.as_deref().or(config.outputs.paths.result.as_deref());
                    emit(&to_json(&doc), path)
                }
                OutputFormat::Csv => {
                    let path = out.as_deref().or(config.outputs.paths.boundary_csv.as_deref());
                    emit(&boundary_csv(&doc.boundary), path)
                }
            }
        }
        Command::Boundary { config, csv } => {
            let config = RunConfig::load(config)?;
            let spec = config.spec();
            require_free_boundary(&spec)?;
            let solution = analysis::solve(&spec, &config.solve_options())?;
            let path = csv.as_deref().or(config.outputs.paths.boundary_csv.as_deref());
            emit(&boundary_csv(&solution.boundary), path)
        }
        Command::Simulate {
            config,
            policy,
            paths,
            seed,
            steps,
            out,
        } => {
            let config = RunConfig::load(config)?;
            let spec = config.spec();
            let base = config.mc.unwrap_or_default();
            let mc = McConfig {
                n_paths: paths.unwrap_or(base.n_paths),
                n_steps: steps.unwrap_or(base.n_steps),
                seed: seed.unwrap_or(base.seed),
            };
            RunConfig {
                mc: Some(mc),
                ..config.clone()
            }
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
            let policy = match policy {
                PolicyArg::Now => StoppingPolicy::StopAt(0.0),
                PolicyArg::Maturity => StoppingPolicy::StopAt(spec.horizon_t),
                PolicyArg::Boundary => {
                    StoppingPolicy::Boundary(analysis::solve(&spec, &config.solve_options())?.boundary)
                }
            };
            let batch = simulate_paths(&spec, mc.n_paths, mc.n_steps, mc.seed)?;
            let estimate = evaluate_policy(&batch, &policy, &spec, exec);
            let path = out.as_deref().or(config.outputs.paths.result.as_deref());
            emit(&to_json(&estimate), path)
        }
        Command::Sweep {
            config,
            sigma,
            out,
            csv_dir,
        } => {
            let config = RunConfig::load(config)?;
            let report: SweepReport = analysis::sigma_sweep(&config.spec(), sigma, &config.solve_options(), exec)
                .map_err(|e| match e {
                    Error::InvalidParameter { .. } => CliError::Config(e.to_string()),
                    other => CliError::Solver(other),
                })?;
            if let Some(dir) = csv_dir.as_deref().or(config.outputs.paths.sweep_dir.as_deref()) {
                fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
                for point in &report.points {
                    if let Some(b) = &point.boundary {
                        let name = format!("boundary_sigma_{}.csv", format_sig9(point.sigma));
                        emit(&boundary_csv(b), Some(&dir.join(name)))?;
                    }
                }
            }
            let path = out.as_deref().or(config.outputs.paths.result.as_deref());
            emit(&to_json(&report), path)
        }
        Command::Oracle { config, out } => {
            let config = RunConfig::load(config)?;
            let doc = build_oracle_document(&config);
            let path = out.as_deref().or(config.outputs.paths.result.as_deref());
            emit(&to_json(&doc), path)
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("taxstop: {e}");
            e.exit_code()
        }
    }
}
