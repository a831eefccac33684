use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qnd_sim::{dispatch, parse_config, Experiment, RunError};

#[derive(Parser)]
#[command(name = "qnd", version, about = "Repeated impulsive position measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Energies and eigenfunctions of the configured potential
    Spectrum(Flags),
    /// Effective uncertainty against quiescent time for an oscillator
    QndHarmonic(Flags),
    /// Effective uncertainty against quiescent time in the double well
    SquidScan(Flags),
    /// Three-time flux-sign correlators
    LeggettGarg(Flags),
    /// Indirect measurement with two coupled oscillators
    Coupled(Flags),
    /// A single measurement record
    Sequence(Flags),
}

#[derive(clap::Args)]
struct Flags {
    /// Flat `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the configuration
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "qnd-out")]
    out: PathBuf,
    /// Worker threads (0 = automatic); results do not depend on it
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, flags) = match cli.command {
        Command::Spectrum(f) => (Experiment::Spectrum, f),
        Command::QndHarmonic(f) => (Experiment::QndHarmonic, f),
        Command::SquidScan(f) => (Experiment::SquidScan, f),
        Command::LeggettGarg(f) => (Experiment::LeggettGarg, f),
        Command::Coupled(f) => (Experiment::Coupled, f),
        Command::Sequence(f) => (Experiment::Sequence, f),
    };
    match run(experiment, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qnd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(experiment: Experiment, flags: Flags) -> Result<(), RunError> {
    let text = match &flags.config {
        Some(path) => std::fs::read_to_string(path)?,
        None => String::new(),
    };
    let mut config = parse_config(&text, Some(experiment))?;
    if let Some(seed) = flags.seed {
        config = config.with_seed(seed);
    }
    let out = flags.out;
    let manifest = dispatch(&config, &out, flags.threads)?;
    // the artifacts are on disk already; a closed stdout is not an error
    let _ = summary(&manifest, &out);
    Ok(())
}

fn summary(manifest: &qnd_sim::RunManifest, out: &Path) -> io::Result<()> {
    let mut w = io::stdout().lock();
    writeln!(w, "{} finished in {:.2} s", manifest.experiment, manifest.timing.wall_seconds)?;
    writeln!(w, "config sha256 {}", manifest.config_sha256)?;
    for name in &manifest.artifacts {
        writeln!(w, "  wrote {}", out.join(name).display())?;
    }
    let results = serde_json::to_string_pretty(&manifest.results).unwrap_or_default();
    writeln!(w, "{results}")
}
