//! Saved models. A file is a magic line, a one-line JSON header and a
//! payload of little-endian f64 tensors in header order. See
//! `docs/artifact-format.md`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use twostep::baselines::{NgramMap, TokenEncoder};
use twostep::corpus::Label;
use twostep::pipeline::{compose_two_step, RunMode};
use twostep::system::{ArchSpec, Classifier, Featurizer, SystemKind, TrainedSystem};
use twostep::textprep::{CharAlphabet, UnigramModel, Vocab, WordEncoder};
use twostep::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MAGIC: &str = "TWOSTEP-MODEL v";

/// Serializable form of a fitted [`Featurizer`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeaturizerState {
    Ngrams {
        n_min: usize,
        n_max: usize,
        grams: Vec<String>,
    },
    Tokens {
        vocab: Vec<String>,
        buckets: Option<usize>,
    },
    Chars {
        length: usize,
    },
    Words {
        vocab: Vec<String>,
        unigrams: Vec<(String, u64)>,
        length: usize,
        segment_hashtags: bool,
    },
    Hybrid {
        char_length: usize,
        vocab: Vec<String>,
        unigrams: Vec<(String, u64)>,
        length: usize,
        segment_hashtags: bool,
    },
}

fn unigram_pairs(u: &UnigramModel) -> Vec<(String, u64)> {
    u.iter().map(|(w, c)| (w.to_string(), c)).collect()
}

fn word_encoder(vocab: &[String], unigrams: &[(String, u64)], length: usize, segment_hashtags: bool) -> WordEncoder {
    WordEncoder {
        vocab: Vocab::from_tokens(vocab.iter().cloned()),
        unigrams: UnigramModel::from_counts(unigrams.iter().cloned()),
        length,
        segment_hashtags,
    }
}

impl FeaturizerState {
    pub fn capture(f: &Featurizer) -> Self {
        match f {
            Featurizer::Ngrams(map) => {
                let (n_min, n_max) = map.range();
                FeaturizerState::Ngrams {
                    n_min,
                    n_max,
                    grams: map.grams().map(str::to_string).collect(),
                }
            }
            Featurizer::Tokens(enc) => FeaturizerState::Tokens {
                vocab: enc.vocab.tokens().to_vec(),
                buckets: enc.buckets,
            },
            Featurizer::Chars { length } => FeaturizerState::Chars { length: *length },
            Featurizer::Words(w) => FeaturizerState::Words {
                vocab: w.vocab.tokens().to_vec(),
                unigrams: unigram_pairs(&w.unigrams),
                length: w.length,
                segment_hashtags: w.segment_hashtags,
            },
            Featurizer::Hybrid { length, words } => FeaturizerState::Hybrid {
                char_length: *length,
                vocab: words.vocab.tokens().to_vec(),
                unigrams: unigram_pairs(&words.unigrams),
                length: words.length,
                segment_hashtags: words.segment_hashtags,
            },
        }
    }

    pub fn restore(&self) -> Result<Featurizer> {
        Ok(match self {
            FeaturizerState::Ngrams { n_min, n_max, grams } => {
                Featurizer::Ngrams(NgramMap::from_grams(grams.clone(), *n_min, *n_max)?)
            }
            FeaturizerState::Tokens { vocab, buckets } => Featurizer::Tokens(TokenEncoder {
                vocab: Vocab::from_tokens(vocab.iter().cloned()),
                buckets: *buckets,
            }),
            FeaturizerState::Chars { length } => Featurizer::Chars { length: *length },
            FeaturizerState::Words {
                vocab,
                unigrams,
                length,
                segment_hashtags,
            } => Featurizer::Words(word_encoder(vocab, unigrams, *length, *segment_hashtags)),
            FeaturizerState::Hybrid {
                char_length,
                vocab,
                unigrams,
                length,
                segment_hashtags,
            } => Featurizer::Hybrid {
                length: *char_length,
                words: word_encoder(vocab, unigrams, *length, *segment_hashtags),
            },
        })
    }
}

/// Digest of the vocabulary-like state of a featurizer, if it has one.
fn vocab_digest(f: &Featurizer) -> Option<String> {
    match f {
        Featurizer::Ngrams(map) => Some(map.digest()),
        Featurizer::Tokens(enc) => Some(enc.vocab.digest()),
        Featurizer::Chars { .. } => None,
        Featurizer::Words(w) | Featurizer::Hybrid { words: w, .. } => Some(w.vocab.digest()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

/// One trained system inside an artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageHeader {
    pub system: String,
    pub classes: Vec<Label>,
    pub arch: ArchSpec,
    pub featurizer: FeaturizerState,
    pub alphabet_sha256: String,
    pub vocab_sha256: Option<String>,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub creator: String,
    pub mode: RunMode,
    pub threshold: f64,
    pub stages: Vec<StageHeader>,
    pub payload_len: u64,
    pub payload_sha256: String,
}

/// A trained one-step classifier or a step-1/step-2 pair.
#[derive(Debug)]
pub enum Model {
    OneStep(TrainedSystem),
    TwoStep {
        step1: TrainedSystem,
        step2: TrainedSystem,
        threshold: f64,
    },
}

/// Column order of [`Model::scores`].
pub const OUTPUT_LABELS: [Label; 3] = [Label::None, Label::Racism, Label::Sexism];

impl Model {
    pub fn mode(&self) -> RunMode {
        match self {
            Model::OneStep(_) => RunMode::OneStep,
            Model::TwoStep { .. } => RunMode::TwoStep,
        }
    }

    /// Predicted label and three-class probabilities in [`OUTPUT_LABELS`]
    /// order. Two-step probabilities are `1 − p` for none and `p·q` for
    /// each abusive class, where `p` is the step-1 abusive probability.
    pub fn scores(&self, text: &str) -> Result<(Label, [f64; 3])> {
        match self {
            Model::OneStep(s) => {
                let p = s.probabilities(text)?;
                let label = s.classes[twostep::models::argmax(&p)];
                let mut out = [0.0; 3];
                for (c, v) in s.classes.iter().zip(&p) {
                    let i = OUTPUT_LABELS.iter().position(|l| l == c).ok_or_else(|| {
                        Error::Corrupt(format!("one-step model has class {c}"))
                    })?;
                    out[i] = *v;
                }
                Ok((label, out))
            }
            Model::TwoStep {
                step1,
                step2,
                threshold,
            } => {
                let p1 = step1.probabilities(text)?;
                let q = step2.probabilities(text)?;
                let p = p1[1];
                let label = compose_two_step(p, &q, *threshold);
                Ok((label, [1.0 - p, p * q[0], p * q[1]]))
            }
        }
    }

    fn stages(&self) -> Vec<&TrainedSystem> {
        match self {
            Model::OneStep(s) => vec![s],
            Model::TwoStep { step1, step2, .. } => vec![step1, step2],
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serializes `model` into artifact bytes.
pub fn encode(model: &Model) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let mut stages = Vec::new();
    for s in model.stages() {
        let store = s.network.store();
        let mut tensors = Vec::new();
        for id in store.ids() {
            let entry = store.values().entry(id);
            tensors.push(TensorInfo {
                name: entry.name.clone(),
                shape: entry.value.shape().to_vec(),
            });
            for v in entry.value.iter() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        stages.push(StageHeader {
            system: s.kind.name().to_string(),
            classes: s.classes.clone(),
            arch: s.arch.clone(),
            featurizer: FeaturizerState::capture(&s.featurizer),
            alphabet_sha256: CharAlphabet::standard().digest(),
            vocab_sha256: vocab_digest(&s.featurizer),
            tensors,
        });
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        creator: format!("twostep-cli {}", env!("CARGO_PKG_VERSION")),
        mode: model.mode(),
        threshold: match model {
            Model::TwoStep { threshold, .. } => *threshold,
            Model::OneStep(_) => 0.5,
        },
        stages,
        payload_len: payload.len() as u64,
        payload_sha256: sha256_hex(&payload),
    };
    let json = serde_json::to_string(&header)
        .map_err(|e| Error::Invalid(format!("cannot serialize header: {e}")))?;
    let mut out = format!("{MAGIC}{FORMAT_VERSION}\n{json}\n").into_bytes();
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    let bytes = encode(model)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

fn split_line(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Corrupt("truncated header".into()))?;
    Ok((&bytes[..nl], &bytes[nl + 1..]))
}

/// Parses the magic line and header and verifies the payload checksum.
pub fn read_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let (magic, rest) = split_line(bytes)?;
    let magic = std::str::from_utf8(magic).map_err(|_| Error::Corrupt("bad magic line".into()))?;
    let version = magic
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Corrupt("not a model artifact".into()))?
        .parse::<u32>()
        .map_err(|_| Error::Corrupt("bad version in magic line".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::ArtifactVersion {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let (json, payload) = split_line(rest)?;
    let header: Header =
        serde_json::from_slice(json).map_err(|e| Error::Corrupt(format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::ArtifactVersion {
            expected: FORMAT_VERSION,
            found: header.format_version,
        });
    }
    if payload.len() as u64 != header.payload_len {
        return Err(Error::Corrupt(format!(
            "payload is {} bytes, header says {}",
            payload.len(),
            header.payload_len
        )));
    }
    if sha256_hex(payload) != header.payload_sha256 {
        return Err(Error::Corrupt("payload checksum mismatch".into()));
    }
    Ok((header, payload))
}

fn restore_stage(h: &StageHeader, payload: &[u8], offset: &mut usize) -> Result<TrainedSystem> {
    let kind: SystemKind = h.system.parse()?;
    let alphabet = CharAlphabet::standard().digest();
    if h.alphabet_sha256 != alphabet {
        return Err(Error::HashMismatch {
            what: "alphabet",
            artifact: h.alphabet_sha256.clone(),
            config: alphabet,
        });
    }
    let featurizer = h.featurizer.restore()?;
    let vocab = vocab_digest(&featurizer);
    if h.vocab_sha256 != vocab {
        return Err(Error::HashMismatch {
            what: "vocabulary",
            artifact: h.vocab_sha256.clone().unwrap_or_default(),
            config: vocab.unwrap_or_default(),
        });
    }
    let mut network = h.arch.instantiate(None, 0)?;
    let store = network.store_mut();
    if store.len() != h.tensors.len() {
        return Err(Error::Corrupt(format!(
            "{} has {} tensors, artifact lists {}",
            h.system,
            store.len(),
            h.tensors.len()
        )));
    }
    for info in &h.tensors {
        let id = store
            .id(&info.name)
            .ok_or_else(|| Error::Corrupt(format!("unknown tensor `{}`", info.name)))?;
        let value = store.value_mut(id);
        if value.shape() != info.shape.as_slice() {
            return Err(Error::Corrupt(format!(
                "tensor `{}` has shape {:?}, model expects {:?}",
                info.name,
                info.shape,
                value.shape()
            )));
        }
        let n = value.len() * 8;
        let bytes = payload
            .get(*offset..*offset + n)
            .ok_or_else(|| Error::Corrupt("payload too short".into()))?;
        for (v, chunk) in value.iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        *offset += n;
    }
    Ok(TrainedSystem {
        kind,
        classes: h.classes.clone(),
        featurizer,
        arch: h.arch.clone(),
        network,
        report: None,
    })
}

/// Rebuilds a model from artifact bytes.
pub fn decode(bytes: &[u8]) -> Result<Model> {
    let (header, payload) = read_header(bytes)?;
    let mut offset = 0;
    let mut stages = header
        .stages
        .iter()
        .map(|h| restore_stage(h, payload, &mut offset))
        .collect::<Result<Vec<_>>>()?;
    if offset != payload.len() {
        return Err(Error::Corrupt("trailing payload bytes".into()));
    }
    match (header.mode, stages.len()) {
        (RunMode::OneStep, 1) => Ok(Model::OneStep(stages.pop().expect("one stage"))),
        (RunMode::TwoStep, 2) => {
            let step2 = stages.pop().expect("two stages");
            let step1 = stages.pop().expect("two stages");
            Ok(Model::TwoStep {
                step1,
                step2,
                threshold: header.threshold,
            })
        }
        (mode, n) => Err(Error::Corrupt(format!("{} artifact with {n} stages", mode.name()))),
    }
}

pub fn load(path: &Path) -> Result<Model> {
    decode(&fs::read(path)?)
}
