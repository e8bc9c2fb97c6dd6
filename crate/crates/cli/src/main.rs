//! `ensemble-credit`: scenario-driven front end to the ensemble credit model.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 validation failure.

mod commands;
mod error;
mod output;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::{CliError, CliResult};
use output::OutDir;
use scenario::{MethodChoice, Scenario};

#[derive(Parser)]
#[command(name = "ensemble-credit", version, about = "Loss distributions of credit portfolios under random correlations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hyperradial and marginal price densities for each N.
    PriceDensity(Common),
    /// Portfolio loss density for each N with one method.
    LossDensity(Common),
    /// Run the invariant checks; exits 3 if any fails.
    Validate(Common),
    /// Loss densities over every N and every listed method, plus a summary table.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file, or any CSV/JSON output of this tool.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Monte Carlo seed, overriding the scenario.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// second-order, improved, oracle or mc, overriding the scenario.
    #[arg(long, value_name = "NAME")]
    method: Option<String>,
    /// Replace existing output files.
    #[arg(long)]
    overwrite: bool,
}

impl Common {
    fn scenario(&self) -> CliResult<Scenario> {
        let mut s = match &self.config {
            Some(p) => Scenario::load(p)?,
            None => Scenario::default(),
        };
        if let Some(m) = &self.method {
            s.method = MethodChoice::parse(m)?;
        }
        if let Some(seed) = self.seed {
            s.mc.seed = seed;
        }
        if let Some(dir) = &self.out {
            s.output.dir = Some(dir.clone());
        }
        s.validate()?;
        Ok(s)
    }

    fn out_dir(&self, s: &Scenario) -> OutDir {
        OutDir { dir: s.out_dir(), overwrite: self.overwrite }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::PriceDensity(c) => {
            let s = c.scenario()?;
            commands::price_density(&s, &c.out_dir(&s))
        }
        Command::LossDensity(c) => {
            let s = c.scenario()?;
            commands::loss_density(&s, &c.out_dir(&s))
        }
        Command::Sweep(c) => {
            let s = c.scenario()?;
            commands::sweep(&s, &c.out_dir(&s))
        }
        Command::Validate(c) => {
            let s = c.scenario()?;
            let explicit_out = c.out.is_some() || s.output.dir.is_some();
            let out = c.out_dir(&s);
            if explicit_out {
                out.check(&["validate_report.json".to_string()])?;
            }
            let report = commands::validate(&s)?;
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Usage(format!("cannot encode report: {e}")))?;
            println!("{text}");
            if explicit_out {
                out.write_json("validate_report.json", &report)?;
            }
            if report.passed {
                Ok(())
            } else {
                let failed: Vec<&str> =
                    report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                Err(CliError::Validation(failed.join(", ")))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ensemble-credit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
