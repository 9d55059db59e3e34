//! Flat `key = value` run configuration. Later sources override earlier
//! ones: built-in defaults, then the config file, then command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use twostep::models::{ModelConfig, ModelKind};
use twostep::nd::AdamHyper;
use twostep::pipeline::{PipelineSpec, RunMode};
use twostep::system::{EmbeddingSource, SystemConfig, SystemKind};
use twostep::textprep::UnigramModel;
use twostep::{Error, Result};

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "seed",
    "folds",
    "mode",
    "model",
    "step1",
    "step2",
    "threshold",
    "dataset",
    "embeddings",
    "unigrams",
    "out",
    "size",
    "batch_size",
    "max_epochs",
    "patience",
    "eval_fraction",
    "learning_rate",
    "dropout",
    "l2",
    "embedding_dim",
    "embedding_seed",
    "char_len",
    "word_len",
    "char_width",
    "char_maps",
    "char_layers",
    "char_pool",
    "fc_units",
    "char_filter_widths",
    "char_filter_maps",
    "word_filter_widths",
    "word_filter_maps",
    "lr_lambda",
    "svm_c",
    "ngram_min",
    "ngram_max",
    "ngram_min_df",
    "fasttext_dim",
    "fasttext_bigrams",
    "fasttext_buckets",
    "fasttext_l2",
    "word_min_freq",
    "segment_hashtags",
    "synth_size",
];

/// Parses `key = value` lines; `#` starts a comment. Unknown keys and
/// malformed lines are errors naming the line.
pub fn parse_config_text(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!(
                "{}:{}: unknown key `{key}`",
                path.display(),
                n + 1
            )));
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    parse_config_text(&fs::read_to_string(path)?, path)
}

/// The typed configuration of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub folds: usize,
    pub mode: RunMode,
    pub model: SystemKind,
    pub step1: SystemKind,
    pub step2: SystemKind,
    pub threshold: f64,
    pub dataset: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub unigrams: Option<PathBuf>,
    pub out: PathBuf,
    pub synth_size: usize,
    pub embedding_seed: u64,
    pub system: SystemConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            folds: 10,
            mode: RunMode::OneStep,
            model: SystemKind::HybridCnn,
            step1: SystemKind::Lr,
            step2: SystemKind::Lr,
            threshold: 0.5,
            dataset: None,
            embeddings: None,
            unigrams: None,
            out: PathBuf::from("out"),
            synth_size: 2000,
            embedding_seed: 0,
            system: SystemConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|v| parse::<usize>(key, v.trim()))
        .collect()
}

impl RunConfig {
    /// Applies `pairs` in order on top of the defaults. `size` is applied
    /// first whatever its position, so individual CNN keys refine it.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut merged: BTreeMap<&str, &str> = BTreeMap::new();
        for (k, v) in pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
            merged.insert(k, v);
        }
        let mut config = RunConfig::default();
        if let Some(size) = merged.remove("size") {
            config.system.cnn = match size {
                "paper" => ModelConfig::paper(ModelKind::HybridCnn, 3),
                "reduced" => ModelConfig::reduced(ModelKind::HybridCnn, 3),
                other => return Err(Error::Config(format!("size must be paper or reduced, got `{other}`"))),
            };
        }
        for (k, v) in merged {
            config.set(k, v)?;
        }
        config.system.embeddings = match &config.embeddings {
            Some(p) => EmbeddingSource::File(p.clone()),
            None => EmbeddingSource::Hashed {
                seed: config.embedding_seed,
            },
        };
        config.system.train.seed = config.seed;
        Ok(config)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let s = &mut self.system;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "folds" => self.folds = parse(key, v)?,
            "mode" => self.mode = v.parse()?,
            "model" => self.model = v.parse()?,
            "step1" => self.step1 = v.parse()?,
            "step2" => self.step2 = v.parse()?,
            "threshold" => self.threshold = parse(key, v)?,
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "embeddings" => self.embeddings = Some(PathBuf::from(v)),
            "unigrams" => self.unigrams = Some(PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "synth_size" => self.synth_size = parse(key, v)?,
            "embedding_seed" => self.embedding_seed = parse(key, v)?,
            "batch_size" => s.train.batch_size = parse(key, v)?,
            "max_epochs" => s.train.max_epochs = parse(key, v)?,
            "patience" => s.train.patience = parse(key, v)?,
            "eval_fraction" => s.train.eval_fraction = parse(key, v)?,
            "learning_rate" => s.train.adam = AdamHyper::default().with_learning_rate(parse(key, v)?),
            "dropout" => s.cnn.dropout = parse(key, v)?,
            "l2" => s.cnn.l2 = parse(key, v)?,
            "embedding_dim" => s.cnn.embedding_dim = parse(key, v)?,
            "char_len" => s.cnn.char_len = parse(key, v)?,
            "word_len" => s.cnn.word_len = parse(key, v)?,
            "char_width" => s.cnn.char_stack.width = parse(key, v)?,
            "char_maps" => s.cnn.char_stack.maps = parse(key, v)?,
            "char_layers" => s.cnn.char_stack.layers = parse(key, v)?,
            "char_pool" => s.cnn.char_stack.pool = parse(key, v)?,
            "fc_units" => s.cnn.char_stack.fc_units = parse(key, v)?,
            "char_filter_widths" => s.cnn.char_channel.widths = parse_list(key, v)?,
            "char_filter_maps" => s.cnn.char_channel.maps = parse(key, v)?,
            "word_filter_widths" => s.cnn.word_channel.widths = parse_list(key, v)?,
            "word_filter_maps" => s.cnn.word_channel.maps = parse(key, v)?,
            "lr_lambda" => s.lr_lambda = parse(key, v)?,
            "svm_c" => s.svm_c = parse(key, v)?,
            "ngram_min" => s.ngram_range.0 = parse(key, v)?,
            "ngram_max" => s.ngram_range.1 = parse(key, v)?,
            "ngram_min_df" => s.ngram_min_df = parse(key, v)?,
            "fasttext_dim" => s.fasttext.dim = parse(key, v)?,
            "fasttext_bigrams" => s.fasttext.bigrams = parse_bool(key, v)?,
            "fasttext_buckets" => s.fasttext.buckets = parse(key, v)?,
            "fasttext_l2" => s.fasttext.l2 = parse(key, v)?,
            "word_min_freq" => s.word_min_freq = parse(key, v)?,
            "segment_hashtags" => s.segment_hashtags = parse_bool(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Checks value ranges and that referenced input files exist, and
    /// loads the external unigram counts.
    pub fn validate(&mut self) -> Result<()> {
        for (what, path) in [
            ("dataset", &self.dataset),
            ("embeddings", &self.embeddings),
            ("unigrams", &self.unigrams),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Config(format!("{what} file {} does not exist", p.display())));
                }
            }
        }
        if let Some(p) = &self.unigrams {
            self.system.unigrams = Some(UnigramModel::load(p)?);
        }
        self.system.train.validate()?;
        let mut cnn = self.system.cnn.clone();
        for kind in [ModelKind::CharCnn, ModelKind::WordCnn, ModelKind::HybridCnn] {
            cnn.kind = kind;
            if [self.model, self.step1, self.step2]
                .iter()
                .any(|s| s.model_kind() == Some(kind))
            {
                cnn.validate()?;
            }
        }
        self.pipeline_spec().validate()
    }

    pub fn pipeline_spec(&self) -> PipelineSpec {
        let mut spec = match self.mode {
            RunMode::OneStep => PipelineSpec::one_step(self.model, self.folds, self.seed),
            RunMode::TwoStep => PipelineSpec::two_step(self.step1, self.step2, self.folds, self.seed),
        };
        spec.threshold = self.threshold;
        spec
    }

    pub fn dataset(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| Error::Config("no dataset given (`dataset` key or --dataset)".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(v: &[(&str, &str)]) -> Vec<(String, String)> {
        v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn parses_comments_and_blank_lines() {
        let text = "# run\nseed = 7\n\nmode = two_step  # composed\nstep1 = hybridcnn\n";
        let p = parse_config_text(text, Path::new("c.conf")).unwrap();
        let c = RunConfig::from_pairs(&p).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.mode, RunMode::TwoStep);
        assert_eq!(c.step1, SystemKind::HybridCnn);
        assert_eq!(c.system.train.seed, 7);
    }

    #[test]
    fn unknown_key_is_rejected_with_its_line() {
        let err = parse_config_text("seed = 1\nlearning_rat = 0.1\n", Path::new("c.conf")).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains(":2:") && m.contains("learning_rat")));
        assert!(RunConfig::from_pairs(&pairs(&[("colour", "red")])).is_err());
    }

    #[test]
    fn malformed_line() {
        let err = parse_config_text("seed 1\n", Path::new("c.conf")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn later_values_win_and_size_goes_first() {
        let c = RunConfig::from_pairs(&pairs(&[
            ("embedding_dim", "12"),
            ("size", "reduced"),
            ("seed", "1"),
            ("seed", "2"),
        ]))
        .unwrap();
        assert_eq!(c.seed, 2);
        assert_eq!(c.system.cnn.embedding_dim, 12);
        assert_eq!(c.system.cnn.char_stack.maps, ModelConfig::reduced(ModelKind::CharCnn, 3).char_stack.maps);
    }

    #[test]
    fn lists_and_bools() {
        let c = RunConfig::from_pairs(&pairs(&[
            ("word_filter_widths", "2, 3"),
            ("fasttext_bigrams", "yes"),
        ]))
        .unwrap();
        assert_eq!(c.system.cnn.word_channel.widths, vec![2, 3]);
        assert!(c.system.fasttext.bigrams);
        assert!(RunConfig::from_pairs(&pairs(&[("segment_hashtags", "maybe")])).is_err());
    }

    #[test]
    fn missing_files_fail_validation() {
        let mut c = RunConfig::from_pairs(&pairs(&[("dataset", "/nonexistent/data.tsv")])).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
