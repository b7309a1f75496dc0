use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tvae_cli::{cmd_ablate, cmd_evaluate, cmd_generate, cmd_tmle, cmd_train, CliError, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "tvae", version, about = "Targeted VAE experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replications run in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write a dataset CSV and print its summary.
    Generate,
    /// Train per replication, save checkpoints and a report.
    Train,
    /// Evaluate saved checkpoints.
    Evaluate,
    /// Run the ablation grid.
    Ablate,
    /// TMLE baseline.
    Tmle,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    let opts = RunOptions { jobs: cli.jobs };
    let report = match cli.command {
        Command::Generate => {
            let s = cmd_generate(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            return Ok(());
        }
        Command::Train => cmd_train(&cfg, &opts)?,
        Command::Evaluate => cmd_evaluate(&cfg, &opts)?,
        Command::Ablate => cmd_ablate(&cfg, &opts)?,
        Command::Tmle => {
            let r = cmd_tmle(&cfg, &opts)?;
            for d in &r.variants[0].tmle {
                println!(
                    "rep {}: ate {:.4} se {:.4} mean_ic {:.2e} truncated {} eATE {}",
                    d.replication,
                    d.ate,
                    d.se,
                    d.mean_ic,
                    d.truncated,
                    d.eate.map_or("-".into(), |e| format!("{e:.4}"))
                );
            }
            r
        }
    };
    print!("{}", report.table());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
