//! Command-line front end: binds the pipeline stages to a manifest file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rlm::error::Error;
use rlm::io::{self, Manifest};
use rlm::pipeline;

#[derive(Parser)]
#[command(
    name = "rlm",
    about = "Compress identified load-model datasets into representative load models",
    version
)]
struct Cli {
    /// Pipeline manifest (JSON). Missing fields take documented defaults.
    #[arg(short, long, global = true, default_value = "manifest.json")]
    manifest: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the per-bus model files and ground-truth labels.
    Gen,
    /// Export post-fault response curves (one CSV per model and scenario).
    Pfr {
        /// Restrict the export to one bus id.
        #[arg(long)]
        bus: Option<String>,
    },
    /// Temporal clustering: pick each bus's representative load models.
    ClusterTemporal,
    /// Spatial clustering: pool all buses' RLMs and compress per component.
    ClusterSpatial,
    /// Score temporal/spatial replacements against the original models.
    Validate,
    /// Storage accounting for the original, temporal and spatial schemes.
    Report,
}

// Exit codes: 2 configuration, 3 simulation, 4 I/O.
fn classify(err: &Error) -> u8 {
    match err {
        Error::Parse(_) | Error::InvalidParam(_) => 2,
        Error::Io { .. } => 4,
        Error::Scenario { source, .. }
        | Error::Bus { source, .. }
        | Error::Component { source, .. } => classify(source),
        _ => 3,
    }
}

fn run(cli: &Cli) -> rlm::Result<()> {
    let manifest: Manifest = io::read_manifest(&cli.manifest)?;
    match &cli.command {
        Command::Gen => {
            let s = pipeline::run_gen(&manifest)?;
            println!(
                "gen: wrote {} files, {} models ({} clamped values)",
                s.files_written, s.items, s.clamp_events
            );
        }
        Command::Pfr { bus } => {
            let s = pipeline::run_pfr(&manifest, bus.as_deref())?;
            println!(
                "pfr: wrote {} curve files for {} models",
                s.files_written, s.items
            );
        }
        Command::ClusterTemporal => {
            let s = pipeline::run_temporal(&manifest)?;
            println!("cluster-temporal: {} RLMs across all buses", s.items);
        }
        Command::ClusterSpatial => {
            let s = pipeline::run_spatial(&manifest)?;
            println!(
                "cluster-spatial: {} representative components over nc = {:?}",
                s.items, manifest.nc_spatial
            );
        }
        Command::Validate => {
            let (report, s) = pipeline::run_validate(&manifest)?;
            for scenario in report.scenarios() {
                println!(
                    "validate: {scenario} mean F = {:.4}",
                    report.mean_f(&scenario)
                );
            }
            println!("validate: {} rows, {} excluded", s.items, s.excluded);
        }
        Command::Report => {
            let (reports, _) = pipeline::run_report(&manifest)?;
            for (nc, r) in reports {
                println!(
                    "report: nc={nc} Ori {} B / Tem {} B / Spa {} B",
                    r.ori.total_bytes, r.tem.total_bytes, r.spa.total_bytes
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(classify(&err))
        }
    }
}
