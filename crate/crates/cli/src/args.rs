use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "overscale",
    version,
    about = "Fit and extrapolate scaling laws for over-trained language models"
)]
pub struct Cli {
    /// Seed for bootstrap resampling and synthetic noise.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Write the command's artifact here (written atomically).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Suppress progress and summary text on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a scaling law to a runs file.
    Fit(FitArgs),
    /// Predict loss, and optionally average top-1 error, at a run geometry.
    Predict(PredictArgs),
    /// Derived reports, plot data and synthetic testbeds.
    #[command(subcommand)]
    Report(Report),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitForm {
    Cm,
    Power,
    Err,
}

#[derive(Debug, Args)]
pub struct TaskArgs {
    /// Comma-separated downstream tasks to average; selected automatically when omitted.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Vec<String>,

    /// Model size whose runs decide task selection.
    #[arg(long, value_parser = parse_count, default_value = "1.54e8")]
    pub reference_n: u64,

    /// Required margin over chance, in accuracy points.
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// JSON Lines runs file.
    #[arg(long)]
    pub runs: PathBuf,

    /// Validation set whose loss is modeled.
    #[arg(long)]
    pub eval_set: String,

    #[arg(long, value_enum)]
    pub form: FitForm,

    /// Restrict to a named (N, M) preset such as `table2-loss`.
    #[arg(long)]
    pub subset: Option<String>,

    /// Named FLOP exclusion windows to drop, such as `grid-bump`.
    #[arg(long)]
    pub exclude: Vec<String>,

    /// JSON file with extra presets, exclusion windows and budgets.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Keep only runs at this token multiplier (power fits).
    #[arg(long)]
    pub multiplier: Option<f64>,

    /// Attach percentile intervals from this many bootstrap refits.
    #[arg(long)]
    pub bootstrap: Option<usize>,

    /// Confidence level of bootstrap intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,

    #[command(flatten)]
    pub tasks: TaskArgs,
}

#[derive(Debug, Args)]
pub struct Geometry {
    /// Parameter count N.
    #[arg(long)]
    pub params: Option<f64>,

    /// Training tokens D.
    #[arg(long, conflicts_with = "multiplier")]
    pub tokens: Option<f64>,

    /// Token multiplier M = D / N.
    #[arg(long)]
    pub multiplier: Option<f64>,

    /// Training compute C = 6ND.
    #[arg(long, conflicts_with_all = ["params", "tokens"])]
    pub compute: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Loss law or fit report JSON.
    #[arg(long)]
    pub fit: PathBuf,

    /// Error law or fit report JSON to chain after the loss prediction.
    #[arg(long)]
    pub chain: Option<PathBuf>,

    #[command(flatten)]
    pub geometry: Geometry,
}

#[derive(Debug, Subcommand)]
pub enum Report {
    /// Runs on the compute/loss Pareto frontier.
    Pareto(RunsArgs),
    /// Relative prediction error for every run, as CSV.
    Grid(GridArgs),
    /// Compute-optimal token multiplier of a loss law.
    OptimalM(OptimalArgs),
    /// Downstream tasks clearing a margin over chance at a reference scale.
    SelectTasks(SelectArgs),
    /// Training compute of a preset or a runs file.
    TotalCompute(TotalArgs),
    /// Extrapolation error against fit-subset compute.
    Sweep(SweepArgs),
    /// Generate a synthetic testbed from known laws.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct RunsArgs {
    #[arg(long)]
    pub runs: PathBuf,

    #[arg(long)]
    pub eval_set: String,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub runs: PathBuf,

    #[arg(long)]
    pub eval_set: String,

    /// Loss law or fit report JSON.
    #[arg(long)]
    pub fit: PathBuf,

    /// Error law to chain; the grid then scores average top-1 error.
    #[arg(long)]
    pub chain: Option<PathBuf>,

    #[command(flatten)]
    pub tasks: TaskArgs,
}

#[derive(Debug, Args)]
pub struct OptimalArgs {
    #[arg(long)]
    pub fit: PathBuf,

    /// Also report the compute-optimal (N, D) at this compute.
    #[arg(long)]
    pub compute: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub runs: PathBuf,

    #[arg(long, value_parser = parse_count, default_value = "1.54e8")]
    pub reference_n: u64,

    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct TotalArgs {
    #[arg(long, required_unless_present = "runs", conflicts_with = "runs")]
    pub subset: Option<String>,

    #[arg(long)]
    pub runs: Option<PathBuf>,

    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub runs: PathBuf,

    #[arg(long)]
    pub eval_set: String,

    /// Parameter count of the held-out target run.
    #[arg(long, value_parser = parse_count)]
    pub target_n: u64,

    /// Token multiplier of the held-out target run.
    #[arg(long)]
    pub target_m: f64,

    /// Window sizes, as a list (`5,7,9`) or range (`5-29`); defaults to every size from 5.
    #[arg(long, value_parser = parse_windows)]
    pub windows: Option<Windows>,
}

#[derive(Debug, Clone)]
pub struct Windows(pub Vec<usize>);

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in loss law: c4, redpajama or refinedweb.
    #[arg(long, required_unless_present = "fit", conflicts_with = "fit")]
    pub law: Option<String>,

    /// Loss law or fit report JSON to simulate from.
    #[arg(long)]
    pub fit: Option<PathBuf>,

    /// Built-in error law for a synthetic downstream task.
    #[arg(long, conflicts_with = "err_fit")]
    pub err_law: Option<String>,

    #[arg(long)]
    pub err_fit: Option<PathBuf>,

    /// Parameter counts of the grid.
    #[arg(long, value_delimiter = ',', value_parser = parse_count,
          default_value = "1.1e7,7.9e7,1.54e8,4.11e8")]
    pub n_set: Vec<u64>,

    /// Token multipliers of the grid.
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,40,80,160,320,640")]
    pub m_set: Vec<f64>,

    /// Use a named (N, M) preset instead of the N x M grid.
    #[arg(long)]
    pub subset: Option<String>,

    /// Drop grid pairs exceeding this dataset's token budget.
    #[arg(long)]
    pub budget: Option<String>,

    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long, default_value_t = 0.005)]
    pub loss_sigma: f64,

    #[arg(long, default_value_t = 0.0)]
    pub err_sigma: f64,

    #[arg(long, default_value = "synthetic")]
    pub dataset: String,

    #[arg(long, default_value = "val")]
    pub eval_set: String,
}

/// Nonnegative integer given in plain or scientific notation.
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v < 0.0 || v.fract() != 0.0 || v >= u64::MAX as f64 {
        return Err(format!("`{s}` is not a nonnegative integer"));
    }
    Ok(v as u64)
}

fn parse_windows(s: &str) -> Result<Windows, String> {
    let bad = || format!("`{s}` is not a window list or range");
    if let Some((lo, hi)) = s.split_once('-') {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        return Ok(Windows((lo..=hi).collect()));
    }
    s.split(',')
        .map(|w| w.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()
        .map(Windows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_accept_scientific_notation() {
        assert_eq!(parse_count("1.4e9"), Ok(1_400_000_000));
        assert_eq!(parse_count("154000000"), Ok(154_000_000));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
    }

    #[test]
    fn windows() {
        assert_eq!(parse_windows("5-8").unwrap().0, vec![5, 6, 7, 8]);
        assert_eq!(parse_windows("5,9").unwrap().0, vec![5, 9]);
        assert!(parse_windows("9-5").is_err());
    }

    #[test]
    fn cli_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
