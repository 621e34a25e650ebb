mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Outcome;
use config::ConfigFile;

#[derive(Parser, Debug)]
#[command(name = "cqft", version, about = "Forest formulas, Wick bounds, power counting, RG flows and Lévy-area experiments")]
struct Cli {
    /// TOML file with one section per subcommand; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV/JSON outputs
    #[arg(long, global = true, env = "CQFT_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// BKAR forest formula against direct evaluation on random polynomial functionals
    BkarCheck(commands::BkarArgs),
    /// Enumerated Gaussian moments against Monte Carlo and the product bound
    WickCheck(commands::WickArgs),
    /// Superficial degrees, N_ext,max and diagram classification
    Powercount(commands::PowercountArgs),
    /// Single-scale cluster expansion on a cube chain, optionally the two-scale chain
    ClusterDemo(commands::ClusterArgs),
    /// Discrete coupling and counterterm flows
    Rgflow(commands::RgflowArgs),
    /// Maximized domination expressions against their claimed λ-power
    Domination(commands::DominationArgs),
    /// Dyadic Lévy-area variance scan, or the renormalized area surrogate
    Levy(commands::LevyArgs),
    /// Scale partition, slice kernels and scaled decay constants
    Scales(commands::ScalesArgs),
    /// Every acceptance criterion in one deterministic report
    PaperTour(commands::TourArgs),
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match &cli.command {
        Command::BkarCheck(a) => commands::bkar_check(file.resolve("bkar-check", a)?),
        Command::WickCheck(a) => commands::wick_check(file.resolve("wick-check", a)?),
        Command::Powercount(a) => commands::powercount(file.resolve("powercount", a)?),
        Command::ClusterDemo(a) => commands::cluster_demo(file.resolve("cluster-demo", a)?),
        Command::Rgflow(a) => commands::rgflow(file.resolve("rgflow", a)?),
        Command::Domination(a) => commands::domination(file.resolve("domination", a)?),
        Command::Levy(a) => commands::levy(file.resolve("levy", a)?),
        Command::Scales(a) => commands::scales(file.resolve("scales", a)?),
        Command::PaperTour(a) => commands::paper_tour(file.resolve("paper-tour", a)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out_dir = cli.out_dir.clone();
    let outcome = match run(cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = outcome.emit(out_dir.as_deref()) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    if outcome.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
