use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bohmlab::{config::ExperimentConfig, replay, run, RunnerError};

/// Pilot-wave quantum laboratory: config-driven experiments on grids,
/// trajectories, ensembles, perception measures and typicality.
#[derive(Parser)]
#[command(name = "bohmlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its artifacts
    Run {
        /// config file; bare names are searched in $BOHMLAB_CONFIG_PATH
        config: PathBuf,
        /// override the output directory
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// override the ensemble seed
        #[arg(long)]
        seed: Option<u64>,
        /// worker threads for ensemble integration (default: all cores)
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a config file and print every violation found
    Validate {
        config: PathBuf,
    },
    /// Re-analyse exported trajectories without re-integrating them
    Replay {
        config: PathBuf,
        /// ensemble CSV produced by an earlier run
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Resolves a config path: used verbatim when it exists, otherwise searched
/// in the colon-separated directories of $BOHMLAB_CONFIG_PATH.
fn resolve_config_path(given: &Path) -> PathBuf {
    if given.exists() {
        return given.to_path_buf();
    }
    if let Ok(search) = std::env::var("BOHMLAB_CONFIG_PATH") {
        for dir in search.split(':').filter(|s| !s.is_empty()) {
            let candidate = Path::new(dir).join(given);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    given.to_path_buf()
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // ignore the error if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load(
    path: &Path,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<(ExperimentConfig, PathBuf), RunnerError> {
    let resolved = resolve_config_path(path);
    let mut config = ExperimentConfig::load(&resolved)?;
    if let Some(dir) = output_dir {
        config.output.directory = dir;
    }
    if let Some(s) = seed {
        if let Some(e) = config.ensemble.as_mut() {
            e.seed = s;
        }
    }
    let base_dir = resolved
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((config, base_dir))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            output_dir,
            seed,
            threads,
        } => {
            init_threads(threads);
            load(&config, output_dir, seed).and_then(|(cfg, base)| {
                let outcome = run(&cfg, &base)?;
                println!(
                    "wrote {} files to {}",
                    outcome.manifest.files.len(),
                    outcome.output_dir.display()
                );
                Ok(())
            })
        }
        Command::Validate { config } => load(&config, None, None).and_then(|(cfg, base)| {
            let diagnostics = cfg.validate(&base);
            if diagnostics.is_empty() {
                println!("ok: {} is runnable", cfg.name);
                Ok(())
            } else {
                for d in &diagnostics {
                    eprintln!("{}", d);
                }
                Err(RunnerError::Validation(diagnostics))
            }
        }),
        Command::Replay {
            config,
            trajectories,
            output_dir,
            threads,
        } => {
            init_threads(threads);
            load(&config, output_dir, None).and_then(|(cfg, base)| {
                let outcome = replay(&cfg, &base, &trajectories)?;
                println!(
                    "wrote {} files to {}",
                    outcome.manifest.files.len(),
                    outcome.output_dir.display()
                );
                Ok(())
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunnerError::Validation(_)) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
