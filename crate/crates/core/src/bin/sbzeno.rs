use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sbzeno::cli::{self, Outcome, EXIT_CONFIG, EXIT_VERIFY};
use sbzeno::config::{ConfigTable, RunConfig};
use sbzeno::Result;

#[derive(Parser)]
#[command(name = "sbzeno", version, about = "Spin-boson MPS/TDVP dynamics and Zeno / anti-Zeno decay rates")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
    /// Configuration file (sectioned key = value)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sweeps
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run on a chain twice as long, as a convergence check
    #[arg(long, global = true)]
    chain_double: bool,
    /// section.key=value, applied after the config file
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Chain coefficients of the discretized bath
    Chain,
    /// Single trajectory with observables and checkpoint
    Evolve,
    /// Decay rates over the tau grid with QZE / QAZE classification
    Zeno,
    /// Compare TDVP against exact propagation on a small system
    Verify,
    /// Print the documented default configuration
    Template,
}

fn load(args: &Args) -> Result<RunConfig> {
    let mut table = match &args.config {
        Some(p) => ConfigTable::load(p)?,
        None => ConfigTable::default(),
    };
    for o in &args.overrides {
        table.apply_override(o)?;
    }
    if let Some(dir) = &args.out {
        table.set("output.dir", &dir.to_string_lossy())?;
    }
    RunConfig::from_table(table)
}

fn run(args: &Args) -> Result<Outcome> {
    let cfg = load(args)?;
    match args.cmd {
        Cmd::Chain => cli::cmd_chain(&cfg, args.chain_double),
        Cmd::Evolve => cli::cmd_evolve(&cfg, args.chain_double),
        Cmd::Zeno => cli::cmd_zeno(&cfg, args.chain_double),
        Cmd::Verify => cli::cmd_verify(&cfg, args.chain_double),
        Cmd::Template => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if let Cmd::Template = args.cmd {
        print!("{}", ConfigTable::template());
        return ExitCode::SUCCESS;
    }
    if let Some(n) = args.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: cannot start {n} worker threads");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    match run(&args) {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            for f in &out.files {
                eprintln!("wrote {}", f.display());
            }
            if out.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY as u8)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
