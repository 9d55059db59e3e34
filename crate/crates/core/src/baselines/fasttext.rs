use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{glorot, wrong_input, zeros, Architecture, Input, Network};
use crate::nd::{Graph, Mode, NodeId, ParamId, ParamKind, ParamStore, Tensor};
use crate::textprep::{build_vocab, tokenize, Vocab};

pub const DEFAULT_BUCKETS: usize = 1 << 18;

#[derive(Debug, Clone, PartialEq)]
pub struct FastTextConfig {
    pub dim: usize,
    /// Hashed word bigrams, off by default.
    pub bigrams: bool,
    pub buckets: usize,
    pub min_freq: usize,
    pub l2: f64,
}

impl Default for FastTextConfig {
    fn default() -> Self {
        FastTextConfig {
            dim: 100,
            bigrams: false,
            buckets: DEFAULT_BUCKETS,
            min_freq: 1,
            l2: 0.0,
        }
    }
}

/// FNV-1a bucket of the bigram `a b`.
pub fn bigram_bucket(a: &str, b: &str, buckets: usize) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in a.bytes().chain([b' ']).chain(b.bytes()) {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    (h % buckets as u64) as usize
}

/// Token ids for FastText: vocabulary ids of the words, then (optionally)
/// `vocab.len() + bucket` for each adjacent word pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEncoder {
    pub vocab: Vocab,
    pub buckets: Option<usize>,
}

impl TokenEncoder {
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>, config: &FastTextConfig) -> Self {
        let tokenized: Vec<Vec<String>> = texts.into_iter().map(tokenize).collect();
        TokenEncoder {
            vocab: build_vocab(tokenized.iter().map(Vec::as_slice), config.min_freq),
            buckets: config.bigrams.then_some(config.buckets),
        }
    }

    pub fn table_rows(&self) -> usize {
        self.vocab.len() + self.buckets.unwrap_or(0)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        let tokens = tokenize(text);
        let mut ids: Vec<usize> = tokens.iter().map(|t| self.vocab.lookup(t)).collect();
        if let Some(buckets) = self.buckets {
            ids.extend(
                tokens
                    .windows(2)
                    .map(|w| self.vocab.len() + bigram_bucket(&w[0], &w[1], buckets)),
            );
        }
        ids
    }
}

/// Mean of trainable token embeddings followed by one dense layer.
#[derive(Debug, Clone)]
pub struct FastText {
    n_classes: usize,
    l2: f64,
    table: ParamId,
    out: (ParamId, ParamId),
}

impl FastText {
    pub fn build(rows: usize, config: &FastTextConfig, n_classes: usize, seed: u64) -> Result<Network> {
        if config.dim == 0 || rows == 0 || n_classes < 2 {
            return Err(Error::Config("FastText needs a nonempty table and ≥ 2 classes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let limit = 1.0 / config.dim as f64;
        let table = store.add(
            "fasttext.embedding",
            ParamKind::Embedding { trainable: true },
            Tensor::from_shape_fn(&[rows, config.dim][..], |_| rng.random_range(-limit..limit)),
        );
        let out = (
            store.add(
                "out.w",
                ParamKind::Weight,
                glorot(&[config.dim, n_classes], config.dim, n_classes, &mut rng),
            ),
            store.add("out.b", ParamKind::Bias, zeros(&[n_classes])),
        );
        let arch = FastText {
            n_classes,
            l2: config.l2,
            table,
            out,
        };
        Ok(Network::new(Box::new(arch), store))
    }
}

impl Architecture for FastText {
    fn name(&self) -> &'static str {
        "FastText"
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn forward(
        &self,
        g: &mut Graph<'_>,
        input: &Input,
        _mode: Mode,
        _rng: &mut ChaCha8Rng,
    ) -> Result<NodeId> {
        let Input::Tokens(ids) = input else {
            return Err(wrong_input(self.name(), input));
        };
        let mean = g.embed_mean(ids, self.table)?;
        g.dense(mean, self.out.0, self.out.1)
    }

    fn l2(&self) -> f64 {
        self.l2
    }
}
