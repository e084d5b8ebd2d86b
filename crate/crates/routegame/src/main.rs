//! Command-line front end: single runs, sweeps, and profile checks.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use routegame::config::GameConfig;
use routegame::experiment::{
    self, load_profile, parse_rate_list, parse_seed_spec, run_experiment, run_sweep,
};

#[derive(Parser)]
#[command(
    name = "routegame",
    version,
    about = "Simulate repeated route-capacity trading between network operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play one configured game; write trace.csv and summary.txt.
    Run {
        /// Experiment config file.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's horizon.
        #[arg(long)]
        steps: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay one config across seeds and learning rates, in parallel.
    Sweep {
        /// Experiment config file used as the template.
        #[arg(long)]
        config: PathBuf,
        /// Seeds to run: `a..b` (inclusive) or a comma list.
        #[arg(long)]
        seeds: String,
        /// Learning rates, comma separated. Defaults to the config's b.
        #[arg(long)]
        b: Option<String>,
        /// Output directory. Defaults to the config's.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a pure action profile for profitable unilateral deviations.
    Nash {
        /// Experiment config file (defines topology and action grids).
        #[arg(long)]
        config: PathBuf,
        /// Profile file: one `<player> <lo> <hi>` line per player.
        #[arg(long)]
        profile: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            steps,
            out,
        } => {
            let mut config = GameConfig::from_file(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(steps) = steps {
                config.horizon = steps;
            }
            if let Some(out) = out {
                config.out = out;
            }
            let summary = run_experiment(&config)?;
            print!("{}", summary.to_text());
            eprintln!("wrote {}", config.out.join("trace.csv").display());
            eprintln!("wrote {}", config.out.join("summary.txt").display());
        }
        Command::Sweep {
            config,
            seeds,
            b,
            out,
        } => {
            let config = GameConfig::from_file(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let seeds = parse_seed_spec(&seeds)?;
            let rates = match b {
                Some(spec) => parse_rate_list(&spec)?,
                None => Vec::new(),
            };
            let out = out.unwrap_or_else(|| config.out.clone());
            let report = run_sweep(&config, &seeds, &rates, &out)?;
            print!("{}", report.aggregate_text());
            eprintln!("wrote {}", out.join("runs.csv").display());
            eprintln!("wrote {}", out.join("aggregate.txt").display());
        }
        Command::Nash { config, profile } => {
            let config = GameConfig::from_file(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let text = std::fs::read_to_string(&profile)
                .with_context(|| format!("reading {}", profile.display()))?;
            let profile = load_profile(&text)?;
            let report = experiment::check_profile(&config, &profile)?;
            let rendered: Vec<String> = profile
                .iter()
                .map(|(id, interval)| format!("{id}:{interval}"))
                .collect();
            println!("profile = {}", rendered.join(" "));
            println!("nash = {}", report.is_nash);
            for deviation in &report.deviations {
                println!(
                    "deviation: {} -> {} gain {}",
                    deviation.player, deviation.interval, deviation.gain
                );
            }
        }
    }
    Ok(())
}
