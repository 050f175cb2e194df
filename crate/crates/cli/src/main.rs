use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use reserve_cli::{
    cmd_check, cmd_price, cmd_superrep, cmd_sweep, load_claim, load_tree, run, Experiment,
    EXIT_USAGE,
};

#[derive(Parser)]
#[command(
    name = "reserve",
    version,
    about = "Indifference and superreplication prices on scenario trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Superreplication price of one claim, by primal and dual LP.
    Superrep {
        #[arg(long)]
        market: PathBuf,
        #[arg(long)]
        claims: PathBuf,
        #[arg(long)]
        claim: String,
    },
    /// Indifference prices along the configured schedule.
    Price {
        #[arg(long)]
        config: PathBuf,
    },
    /// Writes the risk-aversion sweep as CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assumption diagnostics for the configured family and market.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut err = io::stderr();
    let code = run(&mut err, || match &cli.command {
        Command::Superrep {
            market,
            claims,
            claim,
        } => {
            let tree = load_tree(market)?;
            let claim = load_claim(&tree, claims, claim)?;
            cmd_superrep(&tree, &claim, &mut out)
        }
        Command::Price { config } => cmd_price(&Experiment::load(config)?, &mut out),
        Command::Sweep { config, out: path } => {
            cmd_sweep(&Experiment::load(config)?, path.as_deref(), &mut out)
        }
        Command::Check { config } => cmd_check(&Experiment::load(config)?, &mut out),
    });
    let _ = out.flush();
    ExitCode::from(code as u8)
}
