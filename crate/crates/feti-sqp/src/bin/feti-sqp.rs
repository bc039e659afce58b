use std::path::PathBuf;

use clap::{Parser, Subcommand};
use feti_sqp::bench::{execute_check, execute_run};
use feti_sqp::config::SolverChoice;

#[derive(Parser)]
#[command(name = "feti-sqp", version, about = "Torn-beam benchmark driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured benchmark; writes results.csv and trace.json.
    Run {
        /// JSON run configuration.
        config: PathBuf,
        /// Solver selection override: sqp-qn, newton-p, both or oracle.
        #[arg(long)]
        solver: Option<SolverChoice>,
        /// Output directory (default: the config's out_dir, then ".").
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (fallback: FETI_SQP_THREADS, then the config).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse and validate a configuration, reporting every violation.
    Check {
        /// JSON run configuration.
        config: PathBuf,
    },
}

fn threads_from_env() -> Option<usize> {
    let raw = std::env::var("FETI_SQP_THREADS").ok()?;
    match raw.parse() {
        Ok(n) => Some(n),
        Err(_) => {
            eprintln!("ignoring FETI_SQP_THREADS={raw:?}: not a thread count");
            None
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, solver, out, threads } => {
            let threads = threads.or_else(threads_from_env);
            execute_run(&config, solver, out.as_deref(), threads)
        }
        Command::Check { config } => execute_check(&config),
    };
    std::process::exit(code);
}
