//! `dicke`: spectra, sections, Lyapunov maps, Husimi fields and overlap scans, written
//! as CSV/JSON run directories with a manifest each.

mod cache;
mod commands;
mod error;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Invocation;
use error::{CliError, CliResult};
use manifest::sha256_hex;
use settings::Settings;

#[derive(Parser)]
#[command(name = "dicke", version, about, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Flat TOML (or .json) file of settings; flags override it
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues (and window eigenvectors when --energy is set) with a truncation check
    Spectrum(Common),
    /// Spacing-ratio statistics of the converged bulk, histogram and sliding-window scan
    Ratio(Common),
    /// Poincaré section points at fixed energy
    Poincare(Common),
    /// Finite-time Lyapunov map on the polar grid and averaged exponents
    Lyapunov(Common),
    /// Poincaré–Husimi fields of the eigenstates in the energy window
    Husimi(Common),
    /// Overlap index M of every window state against the chaos mask, and P(M)
    Overlap(Common),
    /// Ensemble scan of the mixed-state fraction R_m with power-law fits
    Scan(Common),
    /// Re-run the command recorded in a run directory's manifest
    Rerun {
        /// Run directory containing manifest.json
        dir: PathBuf,
        /// Write to this directory instead of the recorded one
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn invocation(common: &Common) -> CliResult<Invocation> {
    let (file, config_sha256) = match &common.config {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| CliError::io(format!("reading {}", p.display()), e))?;
            (Settings::from_file(p)?, Some(sha256_hex(&bytes)))
        }
        None => (Settings::default(), None),
    };
    Ok(Invocation {
        settings: file.overlay(&common.settings),
        config_sha256,
    })
}

fn command_fn(name: &str) -> Option<fn(&Invocation) -> CliResult<PathBuf>> {
    Some(match name {
        "spectrum" => commands::spectrum,
        "ratio" => commands::ratio,
        "poincare" => commands::poincare,
        "lyapunov" => commands::lyapunov,
        "husimi" => commands::husimi,
        "overlap" => commands::overlap,
        "scan" => commands::scan,
        _ => return None,
    })
}

fn run(cli: Cli) -> CliResult<PathBuf> {
    let (common, f): (&Common, fn(&Invocation) -> CliResult<PathBuf>) = match &cli.command {
        Command::Rerun { dir, out } => {
            let m = manifest::read_manifest(dir)?;
            let f = command_fn(&m.command)
                .ok_or_else(|| CliError::config("command", format!("`{}` is not a known subcommand", m.command)))?;
            let mut settings = m.params;
            settings.out = Some(out.clone().unwrap_or_else(|| dir.clone()));
            return f(&Invocation {
                settings,
                config_sha256: m.input_hashes.get("config").cloned(),
            });
        }
        Command::Spectrum(c) => (c, commands::spectrum),
        Command::Ratio(c) => (c, commands::ratio),
        Command::Poincare(c) => (c, commands::poincare),
        Command::Lyapunov(c) => (c, commands::lyapunov),
        Command::Husimi(c) => (c, commands::husimi),
        Command::Overlap(c) => (c, commands::overlap),
        Command::Scan(c) => (c, commands::scan),
    };
    f(&invocation(common)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
