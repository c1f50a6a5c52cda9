//! `robustfit`: fit growth curves to epidemic counts with Tsallis-score or
//! likelihood estimation, and produce forecasts, diagnostics and Monte Carlo
//! reports.

mod commands;
mod output;
mod svg;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use output::CliError;

/// Seed used whenever `--seed` is absent.
pub const DEFAULT_SEED: u64 = 20200404;

#[derive(Debug, Parser)]
#[command(name = "robustfit", version, about = "Robust growth-curve fitting for epidemic time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a growth curve to a CSV series and report sandwich inference.
    Fit(FitArgs),
    /// Forecast curve and predictive density from a saved fit.
    Predict(PredictArgs),
    /// Influence curves and observation weights for a saved fit.
    Diagnose(DiagnoseArgs),
    /// Monte Carlo comparison of the Tsallis and likelihood predictors.
    Simulate(SimulateArgs),
    /// Collect e and d estimates with intervals from several fits.
    Table(TableArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    National,
    Regional,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformArg {
    /// Fit the series as loaded.
    None,
    /// Running sum of a daily series.
    Cumsum,
    /// First differences of a cumulative series.
    Daily,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Tsallis,
    Mle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Variance,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotArg {
    Svg,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV file.
    #[arg(long)]
    pub input: std::path::PathBuf,
    /// CSV layout.
    #[arg(long, value_enum, default_value = "national")]
    pub format: FormatArg,
    /// Series column (`value` for the generic layout).
    #[arg(long, default_value = "deceduti")]
    pub series: String,
    /// Region to select in the regional layout; all regions are summed when absent.
    #[arg(long)]
    pub region: Option<String>,
    /// Treat the column as a running total.
    #[arg(long, conflicts_with = "daily")]
    pub cumulative: bool,
    /// Treat the column as daily counts.
    #[arg(long)]
    pub daily: bool,
    /// Transformation applied before fitting.
    #[arg(long, value_enum, default_value = "none")]
    pub transform: TransformArg,
    /// Reindex by calendar day instead of rejecting missing dates.
    #[arg(long)]
    pub allow_gaps: bool,
    /// Curve family: log-logistic-5, log-logistic-4, weibull-1 or gompertz.
    #[arg(long, default_value = "log-logistic-5")]
    pub model: String,
    /// Scoring rule to minimize.
    #[arg(long, value_enum, default_value = "tsallis")]
    pub objective: ObjectiveArg,
    /// Tsallis exponent, strictly greater than 1.
    #[arg(long, default_value_t = 1.5)]
    pub gamma: f64,
    /// Seed for multistart perturbations.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Quasi-Newton iteration cap.
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    /// Relative gradient tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Extra perturbed starts.
    #[arg(long, default_value_t = 0)]
    pub multistart: usize,
    /// Confidence level of the Wald intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Reading of the σ-powers in the sandwich matrices.
    #[arg(long, value_enum, default_value = "variance")]
    pub sigma_convention: ConventionArg,
    /// Output JSON document.
    #[arg(long, default_value = "fit.json")]
    pub out: std::path::PathBuf,
    /// Also write an e/d table row to this CSV.
    #[arg(long)]
    pub table: Option<std::path::PathBuf>,
    /// Write fitted-curve panels next to the output.
    #[arg(long, value_enum)]
    pub plot: Option<PlotArg>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Fit document written by `robustfit fit`.
    #[arg(long)]
    pub fit: std::path::PathBuf,
    /// Forecast days 1..=horizon.
    #[arg(long, default_value_t = 120)]
    pub horizon: usize,
    /// Forecast CSV; density and summary files are written alongside.
    #[arg(long, default_value = "forecast.csv")]
    pub out: std::path::PathBuf,
    /// Design point of the predictive density [default: one day past the last observation].
    #[arg(long)]
    pub z: Option<f64>,
    /// Write forecast and density figures.
    #[arg(long, value_enum)]
    pub plot: Option<PlotArg>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Fit document written by `robustfit fit`.
    #[arg(long)]
    pub fit: std::path::PathBuf,
    /// Influence-curve CSV; weights and summary files are written alongside.
    #[arg(long, default_value = "if_curves.csv")]
    pub out: std::path::PathBuf,
    /// Design point of the curves [default: last observed day].
    #[arg(long)]
    pub x: Option<f64>,
    /// Grid half-width in fitted standard deviations.
    #[arg(long, default_value_t = 8.0)]
    pub half_width: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 401)]
    pub points: usize,
    /// Exponent for observation weights [default: the fit's γ, or 1.5 for likelihood fits].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Write the normalized influence curves.
    #[arg(long, value_enum)]
    pub plot: Option<PlotArg>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON; missing fields take their defaults.
    #[arg(long)]
    pub scenario: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Replicates per regime [default: from the scenario, 1000].
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value = "report.json")]
    pub out: std::path::PathBuf,
    /// Write boxplots of the predictions.
    #[arg(long, value_enum)]
    pub plot: Option<PlotArg>,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Fit documents, one row each.
    #[arg(long, num_args = 1.., required = true)]
    pub fits: Vec<std::path::PathBuf>,
    /// Row labels [default: the region of each fit].
    #[arg(long, num_args = 1..)]
    pub labels: Vec<String>,
    #[arg(long, default_value = "table.csv")]
    pub out: std::path::PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Table(a) => commands::table(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            CliError::new("usage", e.to_string().trim_end()).report();
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            ExitCode::FAILURE
        }
    }
}
