//! `lisrd`: match images, generate and run benchmarks, train models.
//!
//! Log verbosity is read from `LISRD_LOG` (e.g. `LISRD_LOG=info`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lisrd_core::benchmark::{ReportMode, STRATA};
use lisrd_core::commands::{cmd_benchmark, cmd_generate, cmd_match, cmd_train, exit_code};
use lisrd_core::config::{Overrides, PipelineConfig};
use lisrd_core::{Error, Result};

const DEFAULT_BENCHMARK_MODES: &str = "lisrd,hard_assignment,no_tiling,greedy,best_of_4";

#[derive(Parser, Debug)]
#[command(name = "lisrd", version, about = "Local descriptors with online invariance selection")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Side of the tile grid.
    #[arg(long, global = true)]
    tiles: Option<usize>,
    /// Codebook size per channel.
    #[arg(long, global = true)]
    clusters: Option<usize>,
    /// Enables the ratio test with this threshold.
    #[arg(long, global = true)]
    ratio_threshold: Option<f32>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Match two images; writes matches.json, weights.json and overlay.png.
    Match {
        image_a: PathBuf,
        image_b: PathBuf,
        /// lisrd, greedy, hard_assignment, single_channel:<tag>, no_tiling or <mode>@<tiles>.
        #[arg(long, default_value = "lisrd")]
        mode: String,
    },
    /// Render labeled benchmark pairs and their manifest.
    Generate {
        /// Directory of source images; synthetic scenes when omitted.
        #[arg(long)]
        sources: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// Score matching modes on the pairs of a manifest.
    Benchmark {
        manifest: PathBuf,
        /// Comma-separated modes.
        #[arg(long, default_value = DEFAULT_BENCHMARK_MODES)]
        mode: String,
    },
    /// Two-stage training of projections and codebook.
    Train {
        /// JSON file listing source images; synthetic scenes when omitted.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn parse_modes(list: &str) -> Result<Vec<ReportMode>> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let overrides = Overrides { seed: c.seed, tiles: c.tiles, clusters: c.clusters, ratio_threshold: c.ratio_threshold };
    let mut cfg = PipelineConfig::resolve(c.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Match { image_a, image_b, mode } => {
            let (mode, tiles) = match mode.parse::<ReportMode>()? {
                ReportMode::Match { mode, tiles } => (mode, tiles),
                ReportMode::BestOf4 => return Err(Error::InvalidArgument("best_of_4 only applies to benchmarks".into())),
            };
            if let Some(t) = tiles {
                cfg.features.tiles = t;
            }
            let s = cmd_match(&image_a, &image_b, &cfg, mode, &c.out)?;
            println!("{} matches, precision {:.4}, written to {}", s.n_matches, s.precision, c.out.display());
        }
        Command::Generate { sources, count } => {
            let manifest = cmd_generate(sources.as_deref(), &cfg, count, &c.out)?;
            println!("{count} pairs, manifest {}", manifest.display());
        }
        Command::Benchmark { manifest, mode } => {
            let modes = parse_modes(&mode)?;
            let report = cmd_benchmark(&manifest, &cfg, &modes, &c.out)?;
            println!("{} pairs, report in {}", report.num_pairs, c.out.display());
            println!("{:<26} {:>8} {:>9} {:>7}", "mode", "HEst", "Precision", "Recall");
            for m in &report.aggregates {
                if let Some(s) = m.stratum(STRATA[0]) {
                    println!("{:<26} {:>8.4} {:>9.4} {:>7.4}", m.mode, s.h_estimation, s.precision, s.recall);
                }
            }
        }
        Command::Train { manifest } => {
            let outcome = cmd_train(manifest.as_deref(), &cfg, &c.out)?;
            println!(
                "loss {:.5} -> {:.5} over {} steps, checkpoint in {}",
                outcome.initial().total,
                outcome.final_loss.total,
                outcome.curve.len(),
                c.out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LISRD_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
