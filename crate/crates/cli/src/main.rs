use std::path::PathBuf;

use clap::Parser;

/// Plasmonic patch-antenna modeling: planar Purcell and quenching physics,
/// gap-plasmon disk resonances, far-field patterns, decay-curve synthesis
/// and maximum-likelihood Purcell-factor fits.
#[derive(Parser)]
#[command(name = "patch-antenna", version)]
struct Args {
    /// Run configuration (JSON), including the command to execute.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's worker-thread count (0 = machine default).
    #[arg(long)]
    workers: Option<usize>,
}

fn main() {
    let args = Args::parse();
    let code = patch_antenna_cli::run_from_file(
        &args.config,
        args.seed,
        args.out.as_deref(),
        args.workers,
    );
    std::process::exit(code);
}
