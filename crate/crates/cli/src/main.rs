//! `iragent` command-line front end.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;

#[derive(Parser, Debug)]
#[command(
    name = "iragent",
    version,
    about = "Quality-driven multi-degradation image restoration"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. They override the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Calibration file; falls back to the config, then to Q_AGENT_CALIBRATION.
    #[arg(long, global = true)]
    pub calibration: Option<PathBuf>,
    /// `normalized` or `raweq1`.
    #[arg(long, global = true)]
    pub quality_mode: Option<String>,
    /// Minimum quality gain for a stage to be accepted.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// greedy, rollback[:N], random[:SEED], reverse, fixed:DN_M,DH,...
    #[arg(long, global = true)]
    pub strategy: Option<String>,
    /// Worker threads for per-row work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// External perceiver: `tcp://host:port` or a command line.
    #[arg(long, global = true)]
    pub perceiver_endpoint: Option<String>,
    /// Keep wall-clock times in outputs (makes them non-reproducible).
    #[arg(long, global = true)]
    pub record_timing: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the naturalness model, regressor and detector thresholds on pristine images.
    Calibrate {
        pristine_dir: PathBuf,
        out: PathBuf,
        /// Single-degradation variants per image in the threshold sweep.
        #[arg(long)]
        singles: Option<usize>,
        /// Mixed-degradation variants per image in the threshold sweep.
        #[arg(long)]
        mixes: Option<usize>,
    },
    /// Synthesize an ordered multi-degradation dataset.
    Degrade {
        src_dir: PathBuf,
        out_dir: PathBuf,
        /// Variants per source image.
        #[arg(short = 'n', long)]
        n: Option<usize>,
        /// Working resolution as WxH, or `native` to keep source sizes.
        #[arg(long)]
        resolution: Option<String>,
    },
    /// Predict the degradation vector of an image or of every manifest row.
    Perceive { input: PathBuf, out: PathBuf },
    /// Restore an image or every manifest row; writes images and traces.
    Restore {
        input: PathBuf,
        out_dir: PathBuf,
        /// Take tasks from manifest labels instead of perception.
        #[arg(long)]
        oracle_tasks: bool,
    },
    /// Score restored images from a `restore` run against their sources.
    Evaluate {
        manifest: PathBuf,
        traces: PathBuf,
        out: PathBuf,
    },
    /// Run several strategies on every manifest row and compare them.
    Compare {
        manifest: PathBuf,
        out: PathBuf,
        /// Comma-separated strategy list.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
        /// Take tasks from perception instead of manifest labels.
        #[arg(long)]
        perceived_tasks: bool,
        /// Also write the per-strategy summary as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evaluation counts of greedy and rollback search on synthetic tasks.
    BenchComplexity {
        /// Inclusive range of task counts, e.g. `2..6`.
        range: String,
        out: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        max_rollbacks: Option<usize>,
        /// Give every task its full tool list instead of the primary tool only.
        #[arg(long)]
        all_tools: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.global.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let ctx = commands::Context::new(cfg, cli.global)?;
    match cli.command {
        Command::Calibrate {
            pristine_dir,
            out,
            singles,
            mixes,
        } => commands::calibrate(&ctx, &pristine_dir, &out, singles, mixes),
        Command::Degrade {
            src_dir,
            out_dir,
            n,
            resolution,
        } => commands::degrade(&ctx, &src_dir, &out_dir, n, resolution.as_deref()),
        Command::Perceive { input, out } => commands::perceive(&ctx, &input, &out),
        Command::Restore {
            input,
            out_dir,
            oracle_tasks,
        } => commands::restore(&ctx, &input, &out_dir, oracle_tasks),
        Command::Evaluate {
            manifest,
            traces,
            out,
        } => commands::evaluate(&ctx, &manifest, &traces, &out),
        Command::Compare {
            manifest,
            out,
            strategies,
            perceived_tasks,
            csv,
        } => commands::compare(
            &ctx,
            &manifest,
            &out,
            strategies,
            perceived_tasks,
            csv.as_deref(),
        ),
        Command::BenchComplexity {
            range,
            out,
            trials,
            max_rollbacks,
            all_tools,
        } => commands::bench_complexity(&ctx, &range, &out, trials, max_rollbacks, all_tools),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            output::report_error("usage", &e.to_string());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            output::report_error(&output::error_kind(&e), &output::error_message(&e));
            ExitCode::from(2)
        }
    }
}
