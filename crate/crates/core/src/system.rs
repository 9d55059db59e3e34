//! The six classification systems behind one interface: fitting turns a
//! labeled corpus into a [`Classifier`] over raw texts.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{svm_lambda, FastText, FastTextConfig, Linear, NgramMap, TokenEncoder};
use crate::corpus::{LabeledCorpus, Label};
use crate::error::{Error, Result};
use crate::models::{argmax, CharCnn, HybridCnn, Input, ModelConfig, ModelKind, Network, WordCnn};
use crate::nd::softmax;
use crate::textprep::{
    load_embeddings, quantize_chars, CharAlphabet, EmbeddingTable, UnigramModel, WordEncoder,
};
use crate::train::{train, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SystemKind {
    Lr,
    Svm,
    FastText,
    CharCnn,
    WordCnn,
    HybridCnn,
}

impl SystemKind {
    pub const ALL: [SystemKind; 6] = [
        SystemKind::Lr,
        SystemKind::Svm,
        SystemKind::FastText,
        SystemKind::CharCnn,
        SystemKind::WordCnn,
        SystemKind::HybridCnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Lr => "LR",
            SystemKind::Svm => "SVM",
            SystemKind::FastText => "FastText",
            SystemKind::CharCnn => "CharCNN",
            SystemKind::WordCnn => "WordCNN",
            SystemKind::HybridCnn => "HybridCNN",
        }
    }

    pub fn model_kind(self) -> Option<ModelKind> {
        match self {
            SystemKind::CharCnn => Some(ModelKind::CharCnn),
            SystemKind::WordCnn => Some(ModelKind::WordCnn),
            SystemKind::HybridCnn => Some(ModelKind::HybridCnn),
            _ => None,
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        SystemKind::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::Config(format!("unknown system `{s}`")))
    }
}

/// Where WordCNN/HybridCNN word vectors come from.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingSource {
    /// Deterministic per-word random vectors (see `EmbeddingTable::hashed_random`).
    Hashed { seed: u64 },
    /// A word2vec-style text file.
    File(PathBuf),
}

/// Hyperparameters of every system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// CNN template; `kind` and `n_classes` are set per fit. Defaults to
    /// the published sizes with [`DEFAULT_CNN_L2`].
    pub cnn: ModelConfig,
    pub train: TrainConfig,
    pub lr_lambda: f64,
    pub svm_c: f64,
    pub ngram_range: (usize, usize),
    pub ngram_min_df: usize,
    pub fasttext: FastTextConfig,
    pub word_min_freq: usize,
    pub segment_hashtags: bool,
    pub embeddings: EmbeddingSource,
    /// Extra unigram counts merged into the hashtag segmentation model.
    pub unigrams: Option<UnigramModel>,
}

/// Additive CNN weight penalty used unless configured otherwise. The
/// published λ = 1 keeps the networks from fitting even separable data
/// when applied as `λ‖W‖²`, so the default is much weaker.
pub const DEFAULT_CNN_L2: f64 = 1e-4;

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            cnn: ModelConfig {
                l2: DEFAULT_CNN_L2,
                ..ModelConfig::paper(ModelKind::HybridCnn, 3)
            },
            train: TrainConfig::default(),
            lr_lambda: 1e-4,
            svm_c: 1.0,
            ngram_range: (1, 4),
            ngram_min_df: 2,
            fasttext: FastTextConfig::default(),
            word_min_freq: 1,
            segment_hashtags: true,
            embeddings: EmbeddingSource::Hashed { seed: 0 },
            unigrams: None,
        }
    }
}

/// Turns raw text into the [`Input`] of one system.
#[derive(Debug, Clone, PartialEq)]
pub enum Featurizer {
    Ngrams(NgramMap),
    Tokens(TokenEncoder),
    Chars { length: usize },
    Words(WordEncoder),
    Hybrid { length: usize, words: WordEncoder },
}

impl Featurizer {
    pub fn encode(&self, text: &str) -> Input {
        match self {
            Featurizer::Ngrams(map) => Input::Sparse(map.features(text)),
            Featurizer::Tokens(enc) => Input::Tokens(enc.encode(text)),
            Featurizer::Chars { length } => {
                Input::Chars(quantize_chars(text, &CharAlphabet::standard(), *length))
            }
            Featurizer::Words(enc) => Input::Words(enc.encode(text)),
            Featurizer::Hybrid { length, words } => Input::Hybrid(
                quantize_chars(text, &CharAlphabet::standard(), *length),
                words.encode(text),
            ),
        }
    }

    /// Digests of every state fit on training text, by name.
    pub fn fingerprints(&self) -> Vec<(&'static str, String)> {
        let words = |w: &WordEncoder| vec![("vocab", w.vocab.digest()), ("unigrams", w.unigrams.digest())];
        match self {
            Featurizer::Ngrams(map) => vec![("ngrams", map.digest())],
            Featurizer::Tokens(enc) => vec![("vocab", enc.vocab.digest())],
            Featurizer::Chars { .. } => vec![("alphabet", CharAlphabet::standard().digest())],
            Featurizer::Words(w) => words(w),
            Featurizer::Hybrid { words: w, .. } => {
                let mut f = vec![("alphabet", CharAlphabet::standard().digest())];
                f.extend(words(w));
                f
            }
        }
    }
}

/// A fitted model over raw texts.
pub trait Classifier: Send + Sync {
    /// Output classes in score order.
    fn classes(&self) -> &[Label];

    fn probabilities(&self, text: &str) -> Result<Vec<f64>>;

    fn predict(&self, text: &str) -> Result<usize> {
        Ok(argmax(&self.probabilities(text)?))
    }

    /// Digests of the state fit on training data (see [`Featurizer::fingerprints`]).
    fn fingerprints(&self) -> Vec<(&'static str, String)> {
        Vec::new()
    }
}

/// Fits systems on training corpora; the pipeline goes through this so
/// tests can inject oracles.
pub trait SystemFactory: Sync {
    fn fit(&self, kind: SystemKind, train: &LabeledCorpus, seed: u64) -> Result<Box<dyn Classifier>>;
}

/// A system with its fitted featurizer and trained network.
#[derive(Debug)]
pub struct TrainedSystem {
    pub kind: SystemKind,
    pub classes: Vec<Label>,
    pub featurizer: Featurizer,
    pub arch: ArchSpec,
    pub network: Network,
    pub report: Option<TrainReport>,
}

impl TrainedSystem {
    pub fn logits(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.network.logits(&self.featurizer.encode(text))?.to_vec())
    }

    /// Digest of the word embedding table, for systems that have one.
    pub fn embedding_digest(&self) -> Option<String> {
        let store = self.network.store();
        let id = store.id("word.embedding")?;
        let t = store.value(id);
        let rows = t
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .ok()?
            .to_owned();
        Some(crate::textprep::digest_array(&rows))
    }
}

impl Classifier for TrainedSystem {
    fn classes(&self) -> &[Label] {
        &self.classes
    }

    fn probabilities(&self, text: &str) -> Result<Vec<f64>> {
        let logits = self.network.logits(&self.featurizer.encode(text))?;
        Ok(softmax(logits.view()).to_vec())
    }

    fn fingerprints(&self) -> Vec<(&'static str, String)> {
        self.featurizer.fingerprints()
    }
}

/// Enough to rebuild an untrained network of the right shape; trained
/// values are then copied in by parameter name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ArchSpec {
    Cnn {
        config: ModelConfig,
        vocab_rows: usize,
    },
    Linear {
        svm: bool,
        n_features: usize,
        n_classes: usize,
        lambda: f64,
    },
    FastText {
        rows: usize,
        dim: usize,
        l2: f64,
        n_classes: usize,
    },
}

impl ArchSpec {
    /// Builds the network; CNN word channels use `embeddings` when given
    /// and a zero table otherwise.
    pub fn instantiate(&self, embeddings: Option<&EmbeddingTable>, seed: u64) -> Result<Network> {
        match self {
            ArchSpec::Cnn { config, vocab_rows } => {
                let zero;
                let table = match embeddings {
                    Some(t) => t,
                    None => {
                        zero = EmbeddingTable::zeros(*vocab_rows, config.embedding_dim);
                        &zero
                    }
                };
                match config.kind {
                    ModelKind::CharCnn => CharCnn::build(config, seed),
                    ModelKind::WordCnn => WordCnn::build(config, table, seed),
                    ModelKind::HybridCnn => HybridCnn::build(config, table, seed),
                }
            }
            ArchSpec::Linear {
                svm,
                n_features,
                n_classes,
                lambda,
            } => Linear::with_lambda(*svm, *n_features, *n_classes, *lambda),
            ArchSpec::FastText {
                rows,
                dim,
                l2,
                n_classes,
            } => {
                let config = FastTextConfig {
                    dim: *dim,
                    l2: *l2,
                    ..FastTextConfig::default()
                };
                FastText::build(*rows, &config, *n_classes, seed)
            }
        }
    }
}

/// Fits the featurizer of `kind` on `texts` (training texts only) and
/// builds an untrained network for `n_classes`.
pub fn build_system(
    kind: SystemKind,
    config: &SystemConfig,
    texts: &[&str],
    n_classes: usize,
    seed: u64,
) -> Result<(Featurizer, ArchSpec, Network)> {
    match kind {
        SystemKind::Lr | SystemKind::Svm => {
            let (lo, hi) = config.ngram_range;
            let map = NgramMap::fit(texts.iter().copied(), lo, hi, config.ngram_min_df)?;
            let svm = kind == SystemKind::Svm;
            let lambda = if svm {
                svm_lambda(config.svm_c, texts.len())?
            } else {
                config.lr_lambda
            };
            let spec = ArchSpec::Linear {
                svm,
                n_features: map.len(),
                n_classes,
                lambda,
            };
            let net = spec.instantiate(None, seed)?;
            Ok((Featurizer::Ngrams(map), spec, net))
        }
        SystemKind::FastText => {
            let enc = TokenEncoder::fit(texts.iter().copied(), &config.fasttext);
            let spec = ArchSpec::FastText {
                rows: enc.table_rows(),
                dim: config.fasttext.dim,
                l2: config.fasttext.l2,
                n_classes,
            };
            let net = spec.instantiate(None, seed)?;
            Ok((Featurizer::Tokens(enc), spec, net))
        }
        SystemKind::CharCnn | SystemKind::WordCnn | SystemKind::HybridCnn => {
            let mut mc = config.cnn.clone();
            mc.kind = kind.model_kind().expect("CNN kind");
            mc.n_classes = n_classes;
            mc.validate()?;
            if kind == SystemKind::CharCnn {
                let spec = ArchSpec::Cnn {
                    config: mc.clone(),
                    vocab_rows: 0,
                };
                let net = spec.instantiate(None, seed)?;
                return Ok((Featurizer::Chars { length: mc.char_len }, spec, net));
            }
            let words = WordEncoder::fit(
                texts.iter().copied(),
                mc.word_len,
                config.word_min_freq,
                config.segment_hashtags,
                config.unigrams.as_ref(),
            );
            let table = match &config.embeddings {
                EmbeddingSource::Hashed { seed } => {
                    EmbeddingTable::hashed_random(&words.vocab, mc.embedding_dim, *seed)
                }
                EmbeddingSource::File(path) => load_embeddings(path, &words.vocab, mc.embedding_dim)?,
            };
            let spec = ArchSpec::Cnn {
                config: mc.clone(),
                vocab_rows: words.vocab.len(),
            };
            let net = spec.instantiate(Some(&table), seed)?;
            let featurizer = if kind == SystemKind::WordCnn {
                Featurizer::Words(words)
            } else {
                Featurizer::Hybrid {
                    length: mc.char_len,
                    words,
                }
            };
            Ok((featurizer, spec, net))
        }
    }
}

/// Fits and trains one system on `corpus` with early stopping.
pub fn fit_system(
    kind: SystemKind,
    config: &SystemConfig,
    corpus: &LabeledCorpus,
    seed: u64,
) -> Result<TrainedSystem> {
    let schema = corpus.schema();
    let classes = schema.classes().to_vec();
    for &label in &classes {
        if corpus.count(label) == 0 {
            return Err(Error::TooFewExamples {
                class: label.to_string(),
                count: 0,
                needed: 1,
            });
        }
    }
    let texts: Vec<&str> = corpus.examples().iter().map(|e| e.text.as_str()).collect();
    let (featurizer, arch, mut network) = build_system(kind, config, &texts, classes.len(), seed)?;
    let inputs: Vec<Input> = texts.iter().map(|t| featurizer.encode(t)).collect();
    let golds = corpus.class_indices();
    let tc = TrainConfig {
        seed,
        ..config.train.clone()
    };
    let report = train(&mut network, &inputs, &golds, &classes, &tc)?;
    Ok(TrainedSystem {
        kind,
        classes,
        featurizer,
        arch,
        network,
        report: Some(report),
    })
}

/// The production factory: [`fit_system`] with one shared configuration.
#[derive(Debug, Clone, Default)]
pub struct Trainer {
    pub config: SystemConfig,
}

impl SystemFactory for Trainer {
    fn fit(&self, kind: SystemKind, train: &LabeledCorpus, seed: u64) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(fit_system(kind, &self.config, train, seed)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Example, Schema};

    #[test]
    fn names_round_trip() {
        for k in SystemKind::ALL {
            assert_eq!(k.name().parse::<SystemKind>().unwrap(), k);
        }
        assert_eq!("hybridcnn".parse::<SystemKind>().unwrap(), SystemKind::HybridCnn);
        assert!("bert".parse::<SystemKind>().is_err());
    }

    #[test]
    fn missing_class_is_rejected() {
        let corpus = LabeledCorpus::new(
            Schema::NoneAbusive,
            vec![Example::new("1", Label::None, "a b"), Example::new("2", Label::None, "c")],
        )
        .unwrap();
        let err = fit_system(SystemKind::Lr, &SystemConfig::default(), &corpus, 0).unwrap_err();
        assert!(matches!(err, Error::TooFewExamples { .. }));
    }

    #[test]
    fn featurizer_outputs_match_the_system() {
        let texts = ["you are great", "you are awful #sadday", "nice day"];
        let mut config = SystemConfig::default();
        config.cnn = ModelConfig::reduced(ModelKind::HybridCnn, 3);
        config.ngram_min_df = 1;
        for kind in SystemKind::ALL {
            let (f, _, net) = build_system(kind, &config, &texts, 2, 0).unwrap();
            let x = f.encode("you are awful");
            assert_eq!(net.logits(&x).unwrap().len(), 2, "{kind}");
            assert!(!f.fingerprints().is_empty());
        }
    }
}
