use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use gisdesign_cli::commands;
use gisdesign_cli::config::Config;

#[derive(Parser)]
#[command(name = "gisdesign", version, about = "Skeleton selection and two-stage importance sampling over a parameter grid")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "ISF_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Choose a skeleton set; writes skeleton.toml and trace.csv into --out.
    Select {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate every grid target from a skeleton; writes a profile CSV.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        skeleton: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize relative SEs of one or more profiles.
    Compare {
        #[arg(required = true)]
        profiles: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<Config> {
    let mut cfg = Config::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Select { config, out, seed } => {
            let path = commands::select(&load(&config, seed)?, &out)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Estimate { config, skeleton, out, seed } => {
            let profile = commands::estimate(&load(&config, seed)?, &skeleton, &out)?;
            eprintln!("wrote {} rows to {} (N = {}, n = {})", profile.rows.len(), out.display(), profile.split.big_n, profile.split.n);
        }
        Command::Compare { profiles, out } => {
            commands::compare(&profiles, out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.threads {
        Some(t) => gisdesign::exec::with_threads(t.max(1), || run(cli.command)),
        None => run(cli.command),
    }
}
