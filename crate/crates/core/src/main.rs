use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use sectionstack::config::ExperimentConfig;
use sectionstack::pipeline::{run_pipeline, Command, RunOptions};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    /// Gibbs-sample label volumes
    Simulate,
    /// Draw matched-budget observation geometries
    Sample,
    /// Fit parameters by pseudo-likelihood and score recovery
    Estimate,
    /// Abundance, detectability and enrichment stability
    Stats,
    /// Link cross-sections into 3D cell centroids
    Reconstruct,
    /// Coverage and localization against a dense reference
    Evaluate,
    /// 3D structures, 2D-vs-3D distances and axis profiles
    Structures,
    /// Geometry recommendations from earlier outputs
    Advise,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Simulate => Command::Simulate,
            Sub::Sample => Command::Sample,
            Sub::Estimate => Command::Estimate,
            Sub::Stats => Command::Stats,
            Sub::Reconstruct => Command::Reconstruct,
            Sub::Evaluate => Command::Evaluate,
            Sub::Structures => Command::Structures,
            Sub::Advise => Command::Advise,
        }
    }
}

/// Sampling-geometry diagnostics and serial-section reconstruction.
#[derive(Debug, Parser)]
#[command(name = "sectionstack", version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// Experiment config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
    /// Directory holding upstream outputs; may be repeated.
    #[arg(long, short)]
    input: Vec<PathBuf>,
    /// Cell table (cell_id,x,y,z,area,type,section[,true_volume_id]).
    #[arg(long)]
    cells: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = ExperimentConfig::load(&cli.config).and_then(|(config, config_hash)| {
        log::info!("config hash {config_hash}, seed {}", config.seed);
        run_pipeline(&RunOptions {
            command: cli.command.into(),
            config,
            config_hash,
            out_dir: cli.out.clone(),
            inputs: cli.input.clone(),
            cells: cli.cells.clone(),
        })
    });
    match result {
        Ok(report) => {
            for w in &report.warnings {
                log::warn!("{w}");
            }
            for p in &report.outputs {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
