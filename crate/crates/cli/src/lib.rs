//! Command-line driver: configuration, saved models and the subcommands
//! behind the `twostep` binary.

pub mod artifact;
pub mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use twostep::nd::Fault;
use twostep::system::SystemKind;
use twostep::Error;

use crate::config::{read_config_file, RunConfig};

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status for bad flags or configuration.
pub const EXIT_USAGE: i32 = 1;
/// Exit status for unreadable or invalid data and artifacts.
pub const EXIT_DATA: i32 = 2;
/// Exit status for numeric failures, including a failed gradient check.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "twostep", version, about = "One-step and two-step abusive language classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a three-class corpus into the one-step and two-step corpora.
    Prepare(Common),
    /// Train on the whole dataset and save a model artifact.
    Train(Common),
    /// Label the rows of an input file with a saved model.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Model file written by `train`.
        #[arg(long)]
        artifact: PathBuf,
        /// `id<TAB>text` rows (an `id<TAB>label<TAB>text` corpus also works).
        #[arg(long)]
        input: PathBuf,
    },
    /// Cross-validate one pipeline and write its reports.
    Cv(Common),
    /// Cross-validate the one-step model and the two-step pair side by side.
    Compare(Common),
    /// Check analytic gradients against finite differences at reduced size.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Negate dense-layer weight gradients to exercise the checker.
        #[arg(long)]
        inject_bug: bool,
        /// Check every system instead of `--model` only.
        #[arg(long)]
        all: bool,
    },
    /// Write a synthetic three-class corpus.
    Synth(Common),
}

/// Flags shared by all subcommands; each overrides the config file.
#[derive(Debug, Args, Default)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for folds, sampling and initialization (default 0).
    #[arg(long)]
    pub seed: Option<String>,
    /// `one_step` or `two_step`.
    #[arg(long)]
    pub mode: Option<String>,
    /// One-step system: lr, svm, fasttext, charcnn, wordcnn, hybridcnn.
    #[arg(long)]
    pub model: Option<String>,
    /// Two-step abusive detector.
    #[arg(long)]
    pub step1: Option<String>,
    /// Two-step racism/sexism classifier.
    #[arg(long)]
    pub step2: Option<String>,
    /// Cross-validation folds (default 10).
    #[arg(long)]
    pub folds: Option<String>,
    /// Output directory (default `out`).
    #[arg(long)]
    pub out: Option<String>,
    /// Three-class `id<TAB>label<TAB>text` corpus.
    #[arg(long)]
    pub dataset: Option<String>,
    /// word2vec-style text embeddings; hashed random vectors otherwise.
    #[arg(long)]
    pub embeddings: Option<String>,
    /// Extra `token<TAB>count` unigram counts for hashtag segmentation.
    #[arg(long)]
    pub unigrams: Option<String>,
    /// Step-1 abusive probability threshold (default 0.5).
    #[arg(long)]
    pub threshold: Option<String>,
    /// `paper` or `reduced` CNN sizes.
    #[arg(long)]
    pub size: Option<String>,
    /// Examples written by `synth` (default 2000).
    #[arg(long)]
    pub synth_size: Option<String>,
    /// Any other config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Common {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> twostep::Result<RunConfig> {
        let mut pairs = match &self.config {
            Some(p) => {
                if !p.exists() {
                    return Err(Error::Config(format!("config file {} does not exist", p.display())));
                }
                read_config_file(p)?
            }
            None => Vec::new(),
        };
        let flags = [
            ("seed", &self.seed),
            ("mode", &self.mode),
            ("model", &self.model),
            ("step1", &self.step1),
            ("step2", &self.step2),
            ("folds", &self.folds),
            ("out", &self.out),
            ("dataset", &self.dataset),
            ("embeddings", &self.embeddings),
            ("unigrams", &self.unigrams),
            ("threshold", &self.threshold),
            ("size", &self.size),
            ("synth_size", &self.synth_size),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.push((k.to_string(), v.clone()));
            }
        }
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{s}`")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut config = RunConfig::from_pairs(&pairs)?;
        config.validate()?;
        Ok(config)
    }
}

/// Maps a library error to the process exit status.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::NonFinite { .. } | Error::Backward(_) | Error::GradientsUnset | Error::Shape(_) => {
            EXIT_NUMERIC
        }
        _ => EXIT_DATA,
    }
}

/// Runs the parsed command, returning the exit status. Errors go to `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> twostep::Result<i32> {
    match cli.command {
        Command::Prepare(c) => commands::prepare(&c.resolve()?, out)?,
        Command::Train(c) => {
            commands::train(&c.resolve()?, out)?;
        }
        Command::Predict {
            common,
            artifact,
            input,
        } => {
            common.resolve()?;
            for p in [&artifact, &input] {
                if !p.exists() {
                    return Err(Error::Config(format!("{} does not exist", p.display())));
                }
            }
            commands::predict(&artifact, &input, out)?;
        }
        Command::Cv(c) => {
            commands::cv(&c.resolve()?, out)?;
        }
        Command::Compare(c) => {
            commands::compare(&c.resolve()?, out)?;
        }
        Command::Gradcheck {
            common,
            inject_bug,
            all,
        } => {
            let config = common.resolve()?;
            let kinds: Vec<SystemKind> = if all { SystemKind::ALL.to_vec() } else { vec![config.model] };
            let fault = inject_bug.then_some(Fault::FlipWeightGrad);
            let summary = commands::gradcheck(&kinds, fault, config.seed, out)?;
            if !summary.passes() {
                return Ok(EXIT_NUMERIC);
            }
        }
        Command::Synth(c) => commands::synth(&c.resolve()?, out)?,
    }
    Ok(EXIT_OK)
}
