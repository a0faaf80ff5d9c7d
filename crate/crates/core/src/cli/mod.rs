//! Command-line front end.
//!
//! Exit codes: `0` success, `2` usage (unknown flag, missing required
//! input), `3` input (unreadable or malformed files, inconsistent data),
//! `4` configuration, `5` numerical failure. Failures print a single
//! `error: …` line on standard error.

mod commands;
mod config;

use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{
    demo_pipeline, demo_tables, load_embeddings, load_features, load_manifest, score_trials, uniform_groups, Backend,
    DemoRun,
};
pub use config::{DemoSettings, Paths, RunConfig, SynthSettings};

use crate::error::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_CONFIG: u8 = 4;
pub const EXIT_NUMERIC: u8 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "voxattack",
    version,
    about = "Speaker verification attacks on anonymized speech"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; omitted keys take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Union of an original and an anonymized manifest
    Fuse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        orig: Option<PathBuf>,
        #[arg(long)]
        anon: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Log-Mel features for every record of a manifest
    Features {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the speaker embedder
    TrainEmbedder {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory holding feats.orig.txt / feats.anon.txt
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract embeddings with a trained embedder
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        /// embedder.json
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a PLDA backend by EM
    TrainPlda {
        #[command(flatten)]
        common: Common,
        /// Supplies the speaker label of every utterance to train on
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trial list
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "plda")]
        backend: Backend,
        #[arg(long)]
        trials: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// plda.json (plda backend only)
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// EER report for a score file
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        trials: Option<PathBuf>,
        /// One "<subset> <sex>" line per trial
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a synthetic embedding population
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole pipeline on synthetic data
    Demo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => EXIT_CONFIG,
        e if e.is_numeric() => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}

fn merge(flag: Option<PathBuf>, slot: &mut Option<PathBuf>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn require(slot: &Option<PathBuf>, flag: &str) -> Result<PathBuf, Failure> {
    slot.clone()
        .ok_or_else(|| Failure::Usage(format!("missing --{flag} (or paths entry in --config)")))
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    Ok(RunConfig::load(common.config.as_deref())?.resolve(common.seed)?)
}

fn start(out: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    Ok(commands::prepare_out(out, cfg)?)
}

fn use_ansi() -> bool {
    std::io::stdout().is_terminal() && std::env::var_os("NO_COLOR").is_none()
}

fn dispatch(cmd: Command) -> Result<String, Failure> {
    match cmd {
        Command::Fuse {
            common,
            orig,
            anon,
            out,
        } => {
            let mut cfg = load(&common)?;
            merge(orig, &mut cfg.paths.orig_manifest);
            merge(anon, &mut cfg.paths.anon_manifest);
            let orig = require(&cfg.paths.orig_manifest, "orig")?;
            let anon = require(&cfg.paths.anon_manifest, "anon")?;
            start(&out, &cfg)?;
            Ok(commands::fuse_cmd(&orig, &anon, &out)?)
        }
        Command::Features { common, manifest, out } => {
            let mut cfg = load(&common)?;
            merge(manifest, &mut cfg.paths.manifest);
            let manifest = require(&cfg.paths.manifest, "manifest")?;
            start(&out, &cfg)?;
            Ok(commands::features_cmd(&cfg, &manifest, &out)?)
        }
        Command::TrainEmbedder {
            common,
            manifest,
            features,
            out,
        } => {
            let mut cfg = load(&common)?;
            merge(manifest, &mut cfg.paths.manifest);
            merge(features, &mut cfg.paths.features);
            let manifest = require(&cfg.paths.manifest, "manifest")?;
            let features = require(&cfg.paths.features, "features")?;
            start(&out, &cfg)?;
            Ok(commands::train_embedder_cmd(&cfg, &manifest, &features, &out)?)
        }
        Command::Embed {
            common,
            manifest,
            features,
            model,
            out,
        } => {
            let mut cfg = load(&common)?;
            merge(manifest, &mut cfg.paths.manifest);
            merge(features, &mut cfg.paths.features);
            merge(model, &mut cfg.paths.model);
            let manifest = require(&cfg.paths.manifest, "manifest")?;
            let features = require(&cfg.paths.features, "features")?;
            let model = require(&cfg.paths.model, "model")?;
            start(&out, &cfg)?;
            Ok(commands::embed_cmd(&manifest, &features, &model, &out)?)
        }
        Command::TrainPlda {
            common,
            manifest,
            embeddings,
            out,
        } => {
            let mut cfg = load(&common)?;
            merge(manifest, &mut cfg.paths.manifest);
            merge(embeddings, &mut cfg.paths.embeddings);
            let manifest = require(&cfg.paths.manifest, "manifest")?;
            let embeddings = require(&cfg.paths.embeddings, "embeddings")?;
            start(&out, &cfg)?;
            Ok(commands::train_plda_cmd(&cfg, &manifest, &embeddings, &out)?)
        }
        Command::Score {
            common,
            backend,
            trials,
            embeddings,
            model,
            out,
        } => {
            let mut cfg = load(&common)?;
            merge(trials, &mut cfg.paths.trials);
            merge(embeddings, &mut cfg.paths.embeddings);
            merge(model, &mut cfg.paths.model);
            let trials = require(&cfg.paths.trials, "trials")?;
            let embeddings = require(&cfg.paths.embeddings, "embeddings")?;
            let model = match backend {
                Backend::Plda => Some(require(&cfg.paths.model, "model")?),
                Backend::Cosine => None,
            };
            start(&out, &cfg)?;
            Ok(commands::score_cmd(
                backend,
                &trials,
                &embeddings,
                model.as_deref(),
                &out,
            )?)
        }
        Command::Eval {
            common,
            scores,
            trials,
            groups,
            out,
        } => {
            let mut cfg = load(&common)?;
            merge(scores, &mut cfg.paths.scores);
            merge(trials, &mut cfg.paths.trials);
            merge(groups, &mut cfg.paths.groups);
            let scores = require(&cfg.paths.scores, "scores")?;
            let trials = require(&cfg.paths.trials, "trials")?;
            if let Some(out) = &out {
                start(out, &cfg)?;
            }
            let report = commands::eval_cmd(&scores, &trials, cfg.paths.groups.as_deref(), out.as_deref())?;
            Ok(report.to_table(use_ansi()))
        }
        Command::Synth { common, out } => {
            let cfg = load(&common)?;
            start(&out, &cfg)?;
            Ok(commands::synth_cmd(&cfg, &out)?)
        }
        Command::Demo { common, out } => {
            let cfg = load(&common)?;
            start(&out, &cfg)?;
            let run = commands::demo_cmd(&cfg, &out)?;
            Ok(demo_tables(&run, use_ansi()))
        }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(text) => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            exit_code(&e)
        }
    }
}
