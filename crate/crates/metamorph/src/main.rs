use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use metamorph::{run_job, JobConfig};

/// Computes image metamorphosis geodesics and Bezier curves from a JSON job.
#[derive(Debug, Parser)]
#[command(name = "metamorph", version)]
struct Cli {
    /// Job description (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long)]
    threads: Option<NonZeroUsize>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = JobConfig::from_file(&cli.config)?;
    let base = cli.config.parent().unwrap_or(Path::new(""));
    let output_dir = match (&cli.output_dir, &config.output_dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => base.join(dir),
        (None, None) => anyhow::bail!("no output directory: set `output_dir` or pass --output-dir"),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n.get());
    }
    let pool = pool.build().context("cannot start worker threads")?;
    pool.install(|| run_job(&config, base, &output_dir)).map(|_| ())
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Info)
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("metamorph: error: {message}");
            ExitCode::FAILURE
        }
    }
}
