//! `hypertraj` command-line tool.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Relative output paths are resolved against this directory when set.
pub const OUT_ENV: &str = "HYPERTRAJ_OUT";

#[derive(Debug, Parser)]
#[command(name = "hypertraj", version, about = "Trajectory prediction over evolving multiscale hypergraphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleModeArg {
    Sample,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    AffinityHeatmap,
    CategoryHeatmap,
    StrengthCurve,
    Trajectories,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset and write it as JSON lines.
    Gen {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Timestamps per sample; defaults to the scenario length.
        #[arg(long)]
        len: Option<usize>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from a TOML run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run one batch end to end and exit.
        #[arg(long)]
        dry_run: bool,
        /// Continue from `last.*` in the output directory.
        #[arg(long)]
        resume: bool,
        /// Overrides `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Best-of-K metrics of a checkpoint on a dataset.
    Eval {
        /// Directory holding the checkpoint files.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "best")]
        stem: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, value_enum, default_value_t = SampleModeArg::Sample)]
        sample_mode: SampleModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export per-timestamp interaction traces and relational evaluations.
    Reason {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "best")]
        stem: String,
        #[arg(long)]
        data: PathBuf,
        /// Dataset used to fit the category mapping; defaults to `--data`.
        #[arg(long)]
        fit_data: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        /// Output directory for `traces.jsonl` and `report.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Static figures and their raw CSV.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// `traces.jsonl` for heatmaps, `report.json` for strength curves,
        /// a dataset for trajectories.
        #[arg(long)]
        input: PathBuf,
        /// Checkpoint directory, required for trajectories.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "best")]
        stem: String,
        #[arg(long, default_value_t = 0)]
        scene: usize,
        /// Maximum number of steps drawn by the affinity heatmap.
        #[arg(long, default_value_t = 15)]
        steps: usize,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen {
            scenario,
            count,
            seed,
            len,
            workers,
            out,
        } => {
            let scenario = match scenario.parse() {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}\n\nUsage: hypertraj gen --scenario <bars|ybar|charged> --out <OUT>");
                    return ExitCode::from(1);
                }
            };
            commands::gen(scenario, count, seed, len, workers, &out)
        }
        Command::Train {
            config,
            dry_run,
            resume,
            out,
        } => commands::train(&config, dry_run, resume, out.as_deref()),
        Command::Eval {
            checkpoint,
            stem,
            data,
            k,
            sample_mode,
            seed,
            batch_size,
            out,
        } => commands::eval(&checkpoint, &stem, &data, k, sample_mode, seed, batch_size, &out),
        Command::Reason {
            checkpoint,
            stem,
            data,
            fit_data,
            stride,
            batch_size,
            out,
        } => commands::reason(&checkpoint, &stem, &data, fit_data.as_deref(), stride, batch_size, &out),
        Command::Plot {
            kind,
            input,
            checkpoint,
            stem,
            scene,
            steps,
            k,
            seed,
            out,
        } => plot::run(kind, &input, checkpoint.as_deref(), &stem, scene, steps, k, seed, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
