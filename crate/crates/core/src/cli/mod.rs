//! The `dvr` command line: scenario files in, CSV and TOML reports out.
//!
//! Exit status is 0 on success, 2 for configuration problems, 3 when a
//! sweep does not converge, 4 when `verify` finds a violated check and 1
//! for anything else.

pub mod commands;
pub mod output;
pub mod scenario;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;
use crate::gamecore::Mode;
use crate::netgraph::{DEFAULT_BETA, DEFAULT_SIGMA};
use commands::{exit_code, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_VERIFY_FAILED};
use scenario::{Overrides, Scenario};

#[derive(Debug, Parser)]
#[command(name = "dvr", version, about = "Virus-resistant weight adaptation on directed networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a Barabási–Albert network and print its outbreak diagnostics.
    GenerateGraph(GenerateArgs),
    /// Solve one mode of a scenario and export trajectories.
    Run(ScenarioArgs),
    /// Compare no adaptation, the Nash game and the social optimum.
    Compare(ScenarioArgs),
    /// Run the oracle checks on a small scenario.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 150)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    #[arg(long, default_value = "graph")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario TOML file.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario: two-node, five-node-dag, scale-free-50 or scale-free-150.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Halve the equilibrium control on this edge index before probing.
    #[arg(long)]
    pub corrupt_control: Option<usize>,
}

impl ScenarioArgs {
    pub fn load(&self) -> Result<Scenario> {
        let overrides = Overrides {
            mode: self.mode,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            seed: self.seed,
            out_dir: self.out_dir.clone(),
        };
        match (&self.scenario, &self.preset) {
            (Some(path), _) => Scenario::load(path, &overrides),
            (None, Some(name)) => Scenario::preset(name, &overrides),
            (None, None) => unreachable!("clap requires one of them"),
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::GenerateGraph(a) => {
            let dir = commands::generate_graph(a.n, a.m, a.seed, a.beta, a.sigma, &a.out_dir)?;
            println!("wrote {}", dir.display());
            Ok(EXIT_OK)
        }
        Command::Run(a) => {
            let out = commands::run(&a.load()?)?;
            let r = &out.report;
            println!("J_o = {}  ({} iterations)", r.social_cost, r.iterations);
            println!("wrote {}", out.dir.display());
            Ok(if r.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
        }
        Command::Compare(a) => {
            let out = commands::compare(&a.load()?)?;
            println!("{:>8}  {:>10}  {:>14}  {:>9}", "alpha", "scheme", "J_o", "converged");
            for row in &out.rows {
                println!(
                    "{:>8}  {:>10}  {:>14.6}  {:>9}",
                    row.alpha, row.scheme, row.social_cost, row.converged
                );
            }
            println!("wrote {}", out.dir.display());
            Ok(if out.rows.iter().all(|r| r.converged) {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            })
        }
        Command::Verify(a) => {
            let out = commands::verify(&a.scenario.load()?, a.corrupt_control)?;
            println!("{}", if out.passed { "all checks passed" } else { "verification FAILED" });
            println!("wrote {}", out.dir.display());
            Ok(if out.passed { EXIT_OK } else { EXIT_VERIFY_FAILED })
        }
    }
}

/// Run a parsed command line and return the process exit status.
pub fn execute(cli: &Cli) -> u8 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
