use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mobexpo_core::pipeline::{run, synth, Gradient, RunConfig, RunOptions, Stage, SynthSpec};
use tracing_subscriber::EnvFilter;

/// Mobility-adjusted PM2.5 exposure and disparity batch engine.
#[derive(Parser, Debug)]
#[command(name = "mobexpo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (JSON).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; overrides the configured one.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides the configured count.
    #[arg(short, long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the configuration and that every input exists.
    Validate(Common),
    /// Aggregate block tables to tracts.
    Ingest(Common),
    /// Build the tract concentration surface and urban mask.
    Surface(Common),
    /// Compute H, W and HW exposures.
    Exposure(Common),
    /// Compute disparity and inequality tables.
    Disparity(Common),
    /// Compute the measurement-error bias factor and rank-sum tests.
    Bias(Common),
    /// Run the configured stages (or up to `--stage`).
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        stage: Option<Stage>,
    },
    /// Write a synthetic input set and config.
    Synth {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 144)]
        tracts: usize,
        #[arg(long, default_value_t = 4)]
        groups: usize,
        /// uniform, linear or work_hotspot
        #[arg(long, default_value = "linear")]
        gradient: Gradient,
        #[arg(long, default_value_t = 2018)]
        year: i32,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    RunConfig::load(&common.config).with_context(|| format!("loading {}", common.config.display()))
}

fn execute(common: &Common, target: Option<Stage>) -> Result<()> {
    let config = load(common)?;
    let opts = RunOptions {
        target,
        threads: common.threads,
        output_dir: common.out.clone(),
    };
    let manifest = run(&config, &opts)?;
    let out = opts.output_dir.unwrap_or_else(|| config.output_path());
    println!(
        "wrote {} files to {} (dropped weight {}, {} warnings in manifest.json)",
        manifest.outputs.len() + 1,
        out.display(),
        manifest.dropped_weight_total,
        manifest.warnings.len()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate(c) => {
            let config = load(&c)?;
            config.validate(None)?;
            println!("ok: {} year(s), stages {:?}", config.years.len(), config.plan(None));
            Ok(())
        }
        Command::Ingest(c) => execute(&c, Some(Stage::Ingest)),
        Command::Surface(c) => execute(&c, Some(Stage::Surface)),
        Command::Exposure(c) => execute(&c, Some(Stage::Exposure)),
        Command::Disparity(c) => execute(&c, Some(Stage::Disparity)),
        Command::Bias(c) => execute(&c, Some(Stage::Bias)),
        Command::Run { common, stage } => execute(&common, stage),
        Command::Synth {
            seed,
            tracts,
            groups,
            gradient,
            year,
            out,
        } => {
            let spec = SynthSpec {
                seed,
                n_tracts: tracts,
                n_groups: groups,
                gradient,
                year,
            };
            let o = synth(&spec, &out)?;
            println!("{} workers; config at {}", o.workers, o.config_path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
