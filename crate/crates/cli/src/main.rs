mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use glyphsim::dataset::Split;

#[derive(Debug, Parser)]
#[command(name = "glyphsim", version, about = "Glyph and writing-system similarity pipeline")]
pub struct Cli {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives bit-exact replays.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct DataArgs {
    /// Omniglot-style root or a `prepare` output directory.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Split manifest; defaults to `<data-root>/manifest.tsv`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the procedural corpus, its level table and the probe scripts.
    Synth,
    /// Validate a corpus and materialize its splits and augmented set.
    Prepare(DataArgs),
    /// Rasterize Unicode ranges with user-supplied fonts.
    RenderUnicode {
        #[arg(long)]
        ranges: Option<PathBuf>,
        #[arg(long)]
        fonts: Option<PathBuf>,
    },
    /// Stage 1: supervised contrastive teacher.
    TrainTeacher(DataArgs),
    /// Stage 2: student and EMA target.
    TrainStudent {
        #[command(flatten)]
        data: DataArgs,
        /// Teacher checkpoint path, or `random` for the plain BYOL baseline.
        #[arg(long)]
        init: String,
    },
    /// Export per-script embedding stores.
    Embed {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "evaluation")]
        split: Split,
        /// Expected embedding dimension.
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Retrieval, script ranking and separability for one or more checkpoints.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        #[arg(long, default_value = "evaluation")]
        split: Split,
        /// `a<TAB>b<TAB>level` table.
        #[arg(long)]
        levels: Option<PathBuf>,
        /// Dataset with the separability triple scripts.
        #[arg(long)]
        probe_root: Option<PathBuf>,
        /// `related_a,related_b,unrelated`; repeatable.
        #[arg(long)]
        triple: Vec<String>,
    },
    /// Rebuild the report from saved metrics.
    Report {
        /// Defaults to `<out>/metrics.json`.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
