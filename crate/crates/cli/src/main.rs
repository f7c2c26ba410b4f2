//! `cadforge`: runs the CAD-data pipeline stage by stage.
//!
//! Exit codes: 0 on success, 2 when some inputs were rejected, 1 on a
//! fatal error.

mod config;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::PipelineConfig;
use stages::{Ctx, Outcome, ProposerKind};

#[derive(Debug, Parser)]
#[command(
    name = "cadforge",
    version,
    about = "Offline CAD-data pipeline over MiniCQ scripts"
)]
struct Cli {
    /// JSON pipeline config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for stage-internal parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Replaces every RNG seed in the config.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Print the plan without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    #[arg(long, global = true, value_enum, default_value = "mock")]
    proposer: ProposerKind,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Grow the generator pool with the propose-execute-filter loop.
    Evolve {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `evolve.iterations`.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Draw diverse parameter vectors for every generator.
    Sample {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace and slice scripts or generators into flat scripts.
    Slice {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Canonicalize, length-filter and deduplicate scripts.
    Canon {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Add rotated and sketch-swapped variants.
    Augment {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `paths.donors`.
        #[arg(long)]
        donors: Option<PathBuf>,
    },
    /// Render multi-view depth grids as PGM.
    Render {
        files: Vec<PathBuf>,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// 7 or 8.
        #[arg(long)]
        views: Option<usize>,
    },
    /// Chamfer distance, IoU and invalid rate of predictions against targets.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Per-shape reports as JSONL.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-shape reward of predictions against targets.
    Reward {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize the iteration statistics of an evolve run.
    Stats {
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
}

fn or(p: Option<PathBuf>, default: impl AsRef<Path>) -> PathBuf {
    p.unwrap_or_else(|| default.as_ref().to_path_buf())
}

fn run(cli: Cli) -> Result<Outcome> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed_override {
        cfg.override_seeds(seed);
    }
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()?;
    }
    let output = cfg.paths.output.clone();
    let pool = cfg.paths.pool.clone();
    let corpus = cfg.paths.corpus.clone();
    let mut ctx = Ctx {
        cfg,
        dry_run: cli.dry_run,
        proposer: cli.proposer,
    };
    match cli.cmd {
        Cmd::Evolve { out, iterations } => {
            if let Some(n) = iterations {
                ctx.cfg.evolve.iterations = n;
            }
            stages::evolve(&ctx, &or(out, &pool))
        }
        Cmd::Sample { input, out } => {
            stages::sample(&ctx, &or(input, &pool), &or(out, output.join("sample")))
        }
        Cmd::Slice { input, out } => stages::slice(
            &ctx,
            &or(input, output.join("sample")),
            &or(out, output.join("slice")),
        ),
        Cmd::Canon { input, out } => {
            stages::canon(&ctx, &or(input, output.join("slice")), &or(out, &corpus))
        }
        Cmd::Augment { input, out, donors } => {
            if donors.is_some() {
                ctx.cfg.paths.donors = donors;
            }
            stages::augment(&ctx, &or(input, &corpus), &or(out, output.join("augment")))
        }
        Cmd::Render {
            files,
            input,
            out,
            views,
        } => stages::render_stage(
            &ctx,
            &files,
            input.as_deref(),
            &or(out, output.join("render")),
            views,
        ),
        Cmd::Eval { pred, target, out } => stages::eval(&ctx, &pred, &target, out.as_deref()),
        Cmd::Reward { pred, target, out } => stages::reward(&ctx, &pred, &target, out.as_deref()),
        Cmd::Stats { input } => stages::stats(&ctx, &or(input, &pool)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(Outcome { rejected: 0 }) => ExitCode::SUCCESS,
        Ok(Outcome { rejected }) => {
            eprintln!("{rejected} input(s) rejected");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
