use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bufshare::report::{self, Dimension, Filter, Metric};
use bufshare::sweep::{generate_grid, run_sweep, GridSpec, Preset};
use bufshare::units::{parse_duration, Span};
use bufshare::SimDuration;
use clap::{Args, Parser, Subcommand};

/// Shared-buffer DCTCP/Cubic experiment sweeps.
#[derive(Parser)]
#[command(name = "bufshare", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Expand a grid and print one JSON config per line (or the grid itself).
    Grid {
        #[command(flatten)]
        grid: GridArgs,
        /// Print the resolved grid spec as TOML instead of expanding it.
        #[arg(long)]
        spec: bool,
        /// Print only the number of experiments.
        #[arg(long, conflicts_with = "spec")]
        count: bool,
    },
    /// Run every experiment of a grid, writing one archive each.
    Run {
        #[command(flatten)]
        grid: GridArgs,
        /// Output directory for archives and the manifest.
        #[arg(long)]
        out: PathBuf,
        /// Parallel experiments (default: available cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Build a heatmap table (or the per-experiment aggregate) from archives.
    Report {
        /// Archive directory or single archive file.
        #[arg(long)]
        archives: PathBuf,
        /// Output CSV path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Horizontal dimension, e.g. drop_threshold.
        #[arg(long, required_unless_present = "aggregate")]
        x: Option<Dimension>,
        /// Vertical dimension, e.g. ecn_threshold.
        #[arg(long, required_unless_present = "aggregate")]
        y: Option<Dimension>,
        /// Metric averaged per cell, e.g. cubic_share or total_drops.
        #[arg(long, required_unless_present = "aggregate")]
        z: Option<Metric>,
        /// Keep only experiments with dimension=value (repeatable).
        #[arg(long = "filter", value_name = "DIM=VALUE")]
        filters: Vec<Filter>,
        /// Emit one row per experiment instead of a heatmap.
        #[arg(long, conflicts_with_all = ["x", "y", "z"])]
        aggregate: bool,
    },
}

#[derive(Args)]
struct GridArgs {
    /// TOML grid specification.
    #[arg(long, conflicts_with = "preset")]
    grid_file: Option<PathBuf>,
    /// Built-in grid: desk or full.
    #[arg(long)]
    preset: Option<Preset>,
    /// Overrides the grid's master seed.
    #[arg(long)]
    master_seed: Option<u64>,
    /// Replaces the grid's durations with this one, e.g. 5s.
    #[arg(long, value_parser = parse_duration)]
    duration: Option<SimDuration>,
}

impl GridArgs {
    fn resolve(&self) -> Result<GridSpec> {
        let mut spec = match (&self.grid_file, self.preset) {
            (Some(path), _) => GridSpec::load(path)?,
            (None, Some(p)) => GridSpec::preset(p),
            (None, None) => GridSpec::preset(Preset::Desk),
        };
        if let Some(seed) = self.master_seed {
            spec.master_seed = seed;
        }
        if let Some(d) = self.duration {
            spec.sim_durations = vec![Span(d)];
        }
        Ok(spec)
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(io::stderr)
        .init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Grid { grid, spec, count } => {
            let gs = grid.resolve()?;
            let mut out = open_out(None)?;
            if spec {
                write!(out, "{}", gs.to_toml_string())?;
            } else {
                let configs = generate_grid(&gs)?;
                if count {
                    writeln!(out, "{}", configs.len())?;
                } else {
                    for c in &configs {
                        serde_json::to_writer(&mut out, c)?;
                        writeln!(out)?;
                    }
                }
            }
            out.flush()?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Run { grid, out, workers } => {
            let configs = generate_grid(&grid.resolve()?)?;
            let workers = workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
                .max(1);
            eprintln!("running {} experiments on {workers} workers", configs.len());
            let r = run_sweep(&configs, workers, &out)?;
            eprintln!(
                "executed {}, skipped {} already complete, failed {}",
                r.executed, r.skipped, r.failed
            );
            Ok(if r.failed > 0 {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Cmd::Report {
            archives,
            out,
            x,
            y,
            z,
            filters,
            aggregate,
        } => {
            let records = report::load_archives(&archives)?;
            let sink = open_out(out.as_deref())?;
            if aggregate {
                let kept: Vec<_> = records
                    .into_iter()
                    .filter(|r| filters.iter().all(|f| f.accepts(&r.config)))
                    .collect();
                report::write_aggregate_csv(sink, &kept)?;
            } else {
                let (Some(x), Some(y), Some(z)) = (x, y, z) else {
                    bail!("--x, --y and --z are required without --aggregate");
                };
                let cells = report::heatmap(&records, x, y, z, &filters)?;
                report::write_heatmap_csv(sink, x, y, z, &cells)?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
