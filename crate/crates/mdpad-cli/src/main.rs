use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use mdpad_cli::commands;
use mdpad_cli::config::RunConfig;
use std::path::PathBuf;

/// Motion-distillation face-PAD pipeline: synthetic corpora, video
/// distillation, stacked recurrent ensembles and biometric evaluation.
#[derive(Parser)]
#[command(name = "mdpad", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (key=value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent video-level workers.
    #[arg(long)]
    jobs: Option<usize>,
}

impl CommonArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(jobs) = self.jobs {
            cfg.jobs = jobs;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the built-in synthetic corpus and its manifest.
    GenCorpus {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Distill every manifest video into spatiotemporal and synthetic
    /// images.
    Distill {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Extract per-segment feature files from distilled images.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the stacked ensemble (base models + meta-model).
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Skip training when model files already exist.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score validation/test videos and emit metrics, ROC CSV and SVG.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Time the distillation stages on one segment.
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        /// Repetitions for the median.
        #[arg(long)]
        repeats: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MD_LOG", "info"))
        .format_timestamp(None)
        .init();

    match Cli::parse().command {
        Command::GenCorpus { common } => {
            let cfg = common.config()?;
            let manifest = commands::cmd_gen_corpus(&common.out, &cfg)?;
            println!("{}", manifest.display());
        }
        Command::Distill { manifest, common } => {
            let cfg = common.config()?;
            commands::cmd_distill(&manifest, &cfg, &common.out)?;
        }
        Command::Features { manifest, common } => {
            let cfg = common.config()?;
            commands::cmd_features(&manifest, &cfg, &common.out)?;
        }
        Command::Train { manifest, resume, common } => {
            let cfg = common.config()?;
            commands::cmd_train(&manifest, &cfg, &common.out, resume)?;
        }
        Command::Eval { manifest, common } => {
            let cfg = common.config()?;
            let metrics = commands::cmd_eval(&manifest, &cfg, &common.out)?;
            print!("{}", commands::format_metrics_report(&metrics));
        }
        Command::Bench { manifest, repeats, common } => {
            let mut cfg = common.config()?;
            if let Some(r) = repeats {
                cfg.bench_repeats = r;
            }
            let report = commands::cmd_bench(&manifest, &cfg, &common.out)?;
            print!("{}", std::fs::read_to_string(report)?);
        }
    }
    Ok(())
}
