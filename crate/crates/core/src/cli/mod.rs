//! Command-line front end. Each subcommand is one pipeline stage and writes
//! `resolved_config.json` and `input_manifest.json` next to its outputs.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

pub use commands::{LocalizeSummary, MaskSummary, SelectionsFile, TmapEntry, TmapIndex};
pub use config::{LocalizeConfig, RunConfig};
pub use manifest::{hex_digest, InputManifest, ManifestEntry};

use crate::error::{Error, Result};

pub const LOG_ENV: &str = "NEUROGLM_LOG";

#[derive(Debug, Parser)]
#[command(name = "neuroglm", version, about = "Speech-contrast fMRI GLM and cognitive-status classification")]
pub struct Cli {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic phantom cohort.
    Simulate,
    /// Fit first-level GLMs and write per-subject t-maps.
    Tmap {
        #[arg(long)]
        cohort: PathBuf,
        /// Defaults to events.tsv next to the cohort manifest.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Group significance masks over all subjects.
    Mask {
        #[arg(long)]
        tmaps: PathBuf,
    },
    /// Repeated stratified splits for every configured combo and classifier.
    Classify {
        #[arg(long)]
        cohort: PathBuf,
        /// Defaults to tmaps/ next to the cohort manifest.
        #[arg(long)]
        tmaps: Option<PathBuf>,
    },
    /// Selection-probability maps and clusters from classify output.
    Localize {
        #[arg(long)]
        selections: PathBuf,
        /// Restrict the maps to voxels where this map is positive.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Atlas probability map for an overlap fraction.
        #[arg(long)]
        atlas: Option<PathBuf>,
        /// Atlas label map for a region distribution.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Summary table, pairwise tests and bar chart.
    Report {
        #[arg(long)]
        results: PathBuf,
    },
}

/// Process exit code for an error: 2 missing input, 3 invalid input or
/// configuration, 4 numerical failure, 1 anything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MissingInput(_) => 2,
        Error::Validation(_)
        | Error::Config(_)
        | Error::Format { .. }
        | Error::Dims(_)
        | Error::Index(_)
        | Error::Stratify(_)
        | Error::Pairing(_)
        | Error::Json { .. } => 3,
        Error::Dof { .. }
        | Error::Training(_)
        | Error::Convergence { .. }
        | Error::AucUndefined
        | Error::Degenerate(_)
        | Error::Division(_)
        | Error::EmptyMask => 4,
        Error::Io { .. } => 1,
    }
}

/// Machine-readable error report printed on stderr.
pub fn error_json(e: &Error) -> String {
    let mut v = json!({ "error": e.kind(), "message": e.to_string(), "exit_code": exit_code(e) });
    if let Error::MissingInput(p) | Error::Io { path: p, .. } | Error::Json { path: p, .. } = e {
        v["path"] = json!(p);
    }
    v.to_string()
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut inputs = InputManifest::default();
    let cfg = match &cli.config {
        Some(p) => {
            inputs.add(p)?;
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    }
    .with_seed(cli.seed);
    cfg.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be >= 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let out = cli.out.as_path();
    pool.install(|| match &cli.command {
        Command::Simulate => commands::simulate(&cfg, inputs, out),
        Command::Tmap { cohort, events } => commands::tmap(&cfg, inputs, cohort, events.as_deref(), out),
        Command::Mask { tmaps } => commands::mask(&cfg, inputs, tmaps, out),
        Command::Classify { cohort, tmaps } => commands::classify(&cfg, inputs, cohort, tmaps.as_deref(), out),
        Command::Localize { selections, mask, atlas, labels } => {
            commands::localize(&cfg, inputs, selections, mask.as_deref(), atlas.as_deref(), labels.as_deref(), out)
        }
        Command::Report { results } => commands::report(&cfg, inputs, results, out),
    })
}
