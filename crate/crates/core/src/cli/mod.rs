//! Command-line surface. The binary is a thin wrapper over [`run`].

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_ablate, cmd_eval, cmd_fragment, cmd_reconnect, cmd_run, cmd_synth, cmd_vote, overlay, AblationRow,
    ErrorReport, ResultRecord, RESOLVED_CONFIG,
};
pub use config::{seed_from_env, CliConfig, CLI_SCHEMA_VERSION, SEED_ENV};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "linetrace", version, about = "Thin-line segmentation repair and tip localization")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration; defaults apply to omitted keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed (and LINETRACE_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for image-level parallelism; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a phantom corpus.
    Synth {
        /// Corpus directory; overrides `corpus.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cut virtual fragments out of every ground-truth line.
    Fragment {
        /// Corpus directory; overrides `corpus.dir`.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Fragment directory; overrides `fragments_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline over a corpus.
    Run {
        /// Corpus directory; overrides `corpus.dir`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Results directory; overrides `results_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a results directory against its corpus.
    Eval {
        /// Results directory; overrides `results_dir`.
        #[arg(long)]
        results: Option<PathBuf>,
        /// Corpus directory; overrides `corpus.dir`.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Report directory; overrides `report_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the four stage combinations.
    Ablate {
        /// Corpus directory; overrides `corpus.dir`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Directory for ablation.csv and ablation.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Vote a stored patch set into one mask.
    Vote {
        /// Patch directory holding offsets.json and the patch rasters.
        #[arg(long)]
        patches: PathBuf,
        /// Directory for voted.png.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconnect a single mask.
    Reconnect {
        /// Binary mask image.
        #[arg(long)]
        input: PathBuf,
        /// Directory for reconnected.png and tip.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolved(common: &Common) -> Result<CliConfig> {
    let base = match &common.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    let seed = match common.seed {
        Some(s) => Some(s),
        None => seed_from_env()?,
    };
    base.resolve(seed)
}

/// Runs one parsed invocation.
pub fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = resolved(&cli.common)?;
    let or = |p: &Option<PathBuf>, d: &Path| p.clone().unwrap_or_else(|| d.to_path_buf());
    let work = |cfg: &mut CliConfig| -> Result<()> {
        match &cli.command {
            Command::Synth { out } => {
                cfg.corpus.dir = or(out, &cfg.corpus.dir);
                cmd_synth(cfg, &cfg.corpus.dir).map(drop)
            }
            Command::Fragment { corpus, out } => {
                cfg.corpus.dir = or(corpus, &cfg.corpus.dir);
                cfg.fragments_dir = or(out, &cfg.fragments_dir);
                cmd_fragment(cfg, &cfg.corpus.dir, &cfg.fragments_dir)
            }
            Command::Run { input, out } => {
                cfg.corpus.dir = or(input, &cfg.corpus.dir);
                cfg.results_dir = or(out, &cfg.results_dir);
                cmd_run(cfg, &cfg.corpus.dir, &cfg.results_dir)
            }
            Command::Eval { results, corpus, out } => {
                cfg.results_dir = or(results, &cfg.results_dir);
                cfg.corpus.dir = or(corpus, &cfg.corpus.dir);
                cfg.report_dir = or(out, &cfg.report_dir);
                cmd_eval(cfg, &cfg.results_dir, &cfg.corpus.dir, &cfg.report_dir).map(drop)
            }
            Command::Ablate { input, out } => {
                cfg.corpus.dir = or(input, &cfg.corpus.dir);
                cmd_ablate(cfg, &cfg.corpus.dir, out).map(drop)
            }
            Command::Vote { patches, out } => cmd_vote(cfg, patches, out).map(drop),
            Command::Reconnect { input, out } => cmd_reconnect(cfg, input, out).map(drop),
        }
    };
    match cli.common.jobs {
        Some(0) => Err(Error::Param("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Param(format!("thread pool: {e}")))?
            .install(|| work(&mut cfg)),
        None => work(&mut cfg),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures are reported on stderr as `{"error": {...}}`.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let report = serde_json::json!({ "error": ErrorReport::from(&e) });
            eprintln!("{report}");
            1
        }
    }
}
