//! threshold-scope: classify zero-energy thresholds and measure dispersive decay.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;
use threshold_scope::ScopeError;

#[derive(Debug, Parser)]
#[command(name = "threshold-scope", version, about = "Zero-energy threshold analysis for -Delta + V on a 3D grid")]
struct Cli {
    /// JSON run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for pair sampling (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long = "grid-n", global = true)]
    grid_n: Option<usize>,

    #[arg(long = "grid-L", global = true)]
    grid_l: Option<f64>,

    /// Print the JSON report on stdout instead of a summary.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ranks of S1 and S2 and the threshold class.
    Classify,
    /// Critical coupling of a radial shape by zero-energy shooting.
    Tune {
        #[arg(long)]
        ell: Option<u32>,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        bracket: Option<Vec<f64>>,
    },
    /// Laurent coefficients of A(lambda)^-1 and the remainder over a dyadic sweep.
    Laurent,
    /// Split-step evolution of a Gaussian and the sup-norm decay fit.
    Evolve,
    /// Residual between the band-limited kernel and t^-1/2 F_t.
    TheoremCheck,
    /// Run the acceptance criteria (all, or the listed ones).
    Selftest { criteria: Vec<usize> },
}

fn threads() -> Result<Option<usize>, ScopeError> {
    match std::env::var("THRESHOLD_SCOPE_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(ScopeError::Config(format!("THRESHOLD_SCOPE_THREADS must be a positive integer, got {s:?}"))),
        },
    }
}

fn run(cli: Cli) -> Result<commands::Outcome, ScopeError> {
    threshold_scope::configure_threads(threads()?);
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.grid_n {
        cfg.grid.n = n;
    }
    if let Some(l) = cli.grid_l {
        cfg.grid.l = l;
    }
    if let Command::Tune { ell, bracket } = &cli.command {
        if let Some(e) = ell {
            cfg.tune.ell = *e;
        }
        if let Some(b) = bracket {
            cfg.tune.bracket = [b[0], b[1]];
        }
    }
    cfg.validate()?;
    match &cli.command {
        Command::Classify => commands::classify(&cfg),
        Command::Tune { .. } => commands::tune(&cfg),
        Command::Laurent => commands::laurent(&cfg),
        Command::Evolve => commands::evolve(&cfg),
        Command::TheoremCheck => commands::theorem_check_cmd(&cfg),
        Command::Selftest { criteria } => commands::selftest(&cfg, criteria, !cli.json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(out) => {
            if json {
                print!("{}", out.json);
            } else {
                out.summary.iter().for_each(|l| println!("{l}"));
                out.files.iter().for_each(|f| println!("wrote {}", f.display()));
            }
            ExitCode::from(out.failure.unwrap_or(0) as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
