//! Command-line driver: configuration in, staged artifacts out.
//!
//! A run is a sequence of stage commands sharing one output directory:
//! `ingest` or `synthetic` produces the dataset, then `prototypes`, `axes`,
//! `geodesics`, and `coords` build the charts, `verify` stress-tests them,
//! and `report` renders tables, curve files, and patch grids. Every artifact
//! embeds a hash of the effective configuration; a stage refuses artifacts
//! written under a different one. Exit codes: 0 success, 2 configuration
//! error, 3 stage error.

mod artifacts;
mod config;
mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use artifacts::CliError;
use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "driftatlas",
    version,
    about = "Builds density-gradient coordinate charts of a dataset"
)]
struct Cli {
    /// TOML configuration file; flags below override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Refinement kernel sharpness (the geometry kernel).
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Data-sphere member count.
    #[arg(long = "data-sphere", global = true, value_name = "K")]
    data_sphere: Option<usize>,
    /// Coordinate-sphere member count.
    #[arg(long = "coord-sphere", global = true, value_name = "K")]
    coord_sphere: Option<usize>,
    /// Kernel subsample size.
    #[arg(long, global = true, value_name = "M")]
    sample: Option<usize>,
    /// Geodesic sweep angle in radians, in (0, pi].
    #[arg(long = "stop-angle", global = true, value_name = "RAD")]
    stop_angle: Option<f64>,
    /// Coordinates kept per chart.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Output directory for artifacts and reports.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan patches out of an IDX image file into the run dataset.
    Ingest,
    /// Generate the run dataset from the built-in potential or glyphs.
    Synthetic,
    /// Find density modes and their working spheres.
    Prototypes,
    /// Find principal axes and measure radial distances.
    Axes,
    /// Build transverse frames and sweep their geodesics.
    Geodesics,
    /// Rank directions and keep the best k-1 per prototype.
    Coords,
    /// Cross-sample stability checks; fails the run on instability.
    Verify {
        /// Also rebuild whole charts on both samples and compare selections.
        #[arg(long)]
        deep: bool,
    },
    /// Render tables, curve files, patch grids, and the summary.
    Report,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        beta: cli.beta,
        data_sphere: cli.data_sphere,
        coord_sphere: cli.coord_sphere,
        sample: cli.sample,
        stop_angle: cli.stop_angle,
        k: cli.k,
        out: cli.out.clone(),
    });
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    let hash = cfg.content_hash();
    stages::dump_effective_config(&cfg)?;
    match cli.command {
        Command::Ingest => stages::cmd_ingest(&cfg, &hash),
        Command::Synthetic => stages::cmd_synthetic(&cfg, &hash),
        Command::Prototypes => stages::cmd_prototypes(&cfg, &hash),
        Command::Axes => stages::cmd_axes(&cfg, &hash),
        Command::Geodesics => stages::cmd_geodesics(&cfg, &hash),
        Command::Coords => stages::cmd_coords(&cfg, &hash),
        Command::Verify { deep } => stages::cmd_verify(&cfg, &hash, deep),
        Command::Report => stages::cmd_report(&cfg, &hash),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
