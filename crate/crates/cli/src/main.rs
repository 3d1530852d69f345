//! `splatinsert`: insert an object into a Gaussian Splatting scene, one
//! stage per subcommand.
//!
//! Exit codes: 0 success, 2 configuration error, 3 inpainting service
//! unreachable, 4 training diverged, 1 anything else.

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use config::{Overrides, PipelineConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] splatinsert::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use splatinsert::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::Parameter(_)) => 2,
            CliError::Core(E::Transport { .. }) => 3,
            CliError::Core(E::Divergence { .. }) => 4,
            CliError::Core(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "splatinsert", version, about = "Object insertion into Gaussian Splatting scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ConfigArgs {
    /// Pipeline configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig, CliError> {
        PipelineConfig::load(&self.config, &self.overrides)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Export Gaussian centers and colors as a point-cloud JSON.
    SamplePointcloud {
        scene: PathBuf,
        out: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        max_points: usize,
    },
    /// Render the view bundles around the box and seed the coarse prior.
    Extract(ConfigArgs),
    /// Send the bundles to the inpainting endpoint and store its views.
    Inpaint(ConfigArgs),
    /// Fine-tune the scene on the inpainted and original views.
    Reconstruct {
        #[command(flatten)]
        args: ConfigArgs,
        /// Continue from a checkpoint PLY (its JSON sidecar must sit beside it).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score the edited scene and write reports.
    Evaluate {
        #[command(flatten)]
        args: ConfigArgs,
        /// Score consistency inside the editing masks only.
        #[arg(long)]
        masked: bool,
    },
    /// Extract, inpaint, reconstruct and evaluate in one go.
    RunAll(ConfigArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SamplePointcloud { scene, out, max_points } => {
            let n = stages::sample_pointcloud(&scene, &out, max_points)?;
            eprintln!("wrote {n} points to {}", out.display());
        }
        Command::Extract(args) => extract(&args.load()?)?,
        Command::Inpaint(args) => inpaint(&args.load()?)?,
        Command::Reconstruct { args, resume } => reconstruct(&args.load()?, resume)?,
        Command::Evaluate { args, masked } => evaluate(&args.load()?, masked)?,
        Command::RunAll(args) => {
            let config = args.load()?;
            extract(&config)?;
            inpaint(&config)?;
            reconstruct(&config, None)?;
            evaluate(&config, false)?;
        }
    }
    Ok(())
}

fn extract(config: &PipelineConfig) -> Result<(), CliError> {
    let n = stages::extract(config)?;
    eprintln!("wrote {n} view bundles to {}", config.bundles_dir().display());
    Ok(())
}

fn inpaint(config: &PipelineConfig) -> Result<(), CliError> {
    let n = stages::inpaint_stage(config)?;
    eprintln!("wrote {n} inpainted views to {}", config.inpainted_dir().display());
    Ok(())
}

fn reconstruct(config: &PipelineConfig, resume: Option<PathBuf>) -> Result<(), CliError> {
    let s = stages::reconstruct(config, resume.as_deref())?;
    eprintln!(
        "{} iterations, {} -> {} Gaussians; wrote {}",
        s.iterations,
        s.initial_gaussians,
        s.gaussians,
        config.reconstruct_dir().join(stages::EDITED_FILE).display()
    );
    Ok(())
}

fn evaluate(config: &PipelineConfig, masked: bool) -> Result<(), CliError> {
    for (name, r) in stages::evaluate(config, masked)? {
        eprintln!("{name}: PSNR {:.2} dB, SSIM {:.4}", r.mean_psnr, r.mean_ssim);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
