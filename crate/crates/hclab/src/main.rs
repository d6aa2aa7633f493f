use clap::{Parser, Subcommand};
use hclab::cli;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "hclab",
    about = "Radial variational solver and verification lab for the Hardy–Choquard problem",
    version
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the Rayleigh quotient at the configured parameters
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to output.directory or ./out/<timestamp>)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification suite and write the aggregate report
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// all | identities | oracles | asymptotics | inequalities
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Time dense vs FFT Riesz applies and audit their agreement
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let code = match args.command {
        Command::Solve { config, out } => match cli::load_config(&config) {
            Ok(cfg) => cli::cmd_solve(&cfg, out.as_deref()),
            Err(code) => code,
        },
        Command::Verify { config, out, suite } => match cli::load_config(&config) {
            Ok(cfg) => cli::cmd_verify(&cfg, &suite, out.as_deref()),
            Err(code) => code,
        },
        Command::Bench { config, out } => match cli::load_config(&config) {
            Ok(cfg) => cli::cmd_bench(&cfg, out.as_deref()),
            Err(code) => code,
        },
    };
    std::process::exit(code);
}
