mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, Report};
use output::{exit_code, Output, EXIT_USAGE};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let out = Output::new(cli.seed, cli.quiet, cli.out.clone());
    let result = match &cli.command {
        Command::Fit(a) => commands::fit(a, &out),
        Command::Predict(a) => commands::predict(a, &out),
        Command::Report(r) => match r {
            Report::Pareto(a) => commands::pareto(&a.runs, &a.eval_set, &out),
            Report::Grid(a) => commands::grid(a, &out),
            Report::OptimalM(a) => commands::optimal_m(a, &out),
            Report::SelectTasks(a) => commands::select(a, &out),
            Report::TotalCompute(a) => commands::total(a, &out),
            Report::Sweep(a) => commands::sweep(a, &out),
            Report::Simulate(a) => commands::simulate(a, &out),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
