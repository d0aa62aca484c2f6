use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gmm_ood::cli::{run, split_overrides, Command, RunConfig, EXIT_PRECONDITION};

/// Bayesian GMM out-of-distribution scoring for range-view segmentation.
///
/// Any config key can be overridden as `--section.key value`, e.g.
/// `--ensemble.n_samples 30`; overrides win over the config file.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Project scans into range images and label grids.
    Project(Shared),
    /// Fit per-class GMMs and the posterior bank.
    Fit(Shared),
    /// Write uncertainty maps, predictions and OOD masks.
    Score(Shared),
    /// Evaluate every score channel against the label grids.
    Eval(Shared),
    /// Generate a synthetic dataset and run the benchmark on it.
    Synth(Shared),
}

#[derive(Args)]
struct Shared {
    /// INI config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for EM, ensemble sampling and synthetic data.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().collect();
    let (rest, overrides) = match split_overrides(&args[1..]) {
        Ok(split) => split,
        Err(e) => {
            log::error!("{e}");
            return ExitCode::from(EXIT_PRECONDITION as u8);
        }
    };
    let cli = Cli::parse_from(std::iter::once(args[0].clone()).chain(rest));
    let (command, shared) = match cli.command {
        Cmd::Project(s) => (Command::Project, s),
        Cmd::Fit(s) => (Command::Fit, s),
        Cmd::Score(s) => (Command::Score, s),
        Cmd::Eval(s) => (Command::Eval, s),
        Cmd::Synth(s) => (Command::Synth, s),
    };

    let mut overrides = overrides;
    if let Some(seed) = shared.seed {
        for section in ["ensemble", "synth"] {
            overrides.push(gmm_ood::cli::Override {
                section: section.into(),
                key: "seed".into(),
                value: seed.to_string(),
            });
        }
    }
    if let Some(out) = &shared.out {
        overrides.push(gmm_ood::cli::Override {
            section: "paths".into(),
            key: "output_dir".into(),
            value: out.display().to_string(),
        });
    }

    let result = RunConfig::load(shared.config.as_deref(), &overrides)
        .and_then(|cfg| run(command, &cfg, shared.jobs));
    match result {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(EXIT_PRECONDITION as u8)
        }
    }
}
