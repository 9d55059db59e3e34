use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::ALPHABET_SIZE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    CharCnn,
    WordCnn,
    HybridCnn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::CharCnn => "charcnn",
            ModelKind::WordCnn => "wordcnn",
            ModelKind::HybridCnn => "hybridcnn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "charcnn" => Ok(ModelKind::CharCnn),
            "wordcnn" => Ok(ModelKind::WordCnn),
            "hybridcnn" => Ok(ModelKind::HybridCnn),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

/// Stacked conv/pool stages of the character CNN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharStack {
    pub width: usize,
    pub maps: usize,
    pub layers: usize,
    pub pool: usize,
    pub fc_units: usize,
}

/// Parallel filter widths over one input channel, each followed by
/// 1-max pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub widths: Vec<usize>,
    pub maps: usize,
}

impl Channel {
    pub fn features(&self) -> usize {
        self.widths.len() * self.maps
    }

    pub fn max_width(&self) -> usize {
        self.widths.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// CharCNN layers.
    pub char_stack: CharStack,
    /// Character channel of HybridCNN.
    pub char_channel: Channel,
    /// Word channel of WordCNN and HybridCNN.
    pub word_channel: Channel,
    pub dropout: f64,
    /// L2 penalty on convolution and fully-connected weights.
    pub l2: f64,
    pub embedding_dim: usize,
    pub char_len: usize,
    pub word_len: usize,
    pub n_classes: usize,
}

impl ModelConfig {
    /// The published hyperparameters: CharCNN with two width-4 stages of
    /// 1024 maps, pool 3 and 2048 fully-connected units; word filters
    /// [1,2,3] and hybrid character filters [3,4,5], 50 maps each; L2
    /// constant 1; 300-dimensional embeddings.
    pub fn paper(kind: ModelKind, n_classes: usize) -> Self {
        ModelConfig {
            kind,
            char_stack: CharStack {
                width: 4,
                maps: 1024,
                layers: 2,
                pool: 3,
                fc_units: 2048,
            },
            char_channel: Channel {
                widths: vec![3, 4, 5],
                maps: 50,
            },
            word_channel: Channel {
                widths: vec![1, 2, 3],
                maps: 50,
            },
            dropout: 0.5,
            l2: 1.0,
            embedding_dim: 300,
            char_len: 140,
            word_len: 35,
            n_classes,
        }
    }

    /// Same topology with small widths and lengths, for gradient checks
    /// and quick tests.
    pub fn reduced(kind: ModelKind, n_classes: usize) -> Self {
        ModelConfig {
            kind,
            char_stack: CharStack {
                width: 4,
                maps: 6,
                layers: 2,
                pool: 3,
                fc_units: 8,
            },
            char_channel: Channel {
                widths: vec![3, 4, 5],
                maps: 4,
            },
            word_channel: Channel {
                widths: vec![1, 2, 3],
                maps: 4,
            },
            dropout: 0.5,
            l2: 1.0,
            embedding_dim: 6,
            char_len: 40,
            word_len: 8,
            n_classes,
        }
    }

    pub fn uses_chars(&self) -> bool {
        matches!(self.kind, ModelKind::CharCnn | ModelKind::HybridCnn)
    }

    pub fn uses_words(&self) -> bool {
        matches!(self.kind, ModelKind::WordCnn | ModelKind::HybridCnn)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.n_classes) {
            return Err(Error::Config(format!("n_classes must be 2 or 3, got {}", self.n_classes)));
        }
        if !(0.0..1.0).contains(&self.dropout) || self.l2 < 0.0 {
            return Err(Error::Config("dropout must lie in [0, 1) and l2 ≥ 0".into()));
        }
        let channel_ok = |c: &Channel| c.maps >= 1 && !c.widths.is_empty() && c.widths.iter().all(|&w| w >= 1);
        match self.kind {
            ModelKind::CharCnn => {
                let s = &self.char_stack;
                if s.width == 0 || s.maps == 0 || s.layers == 0 || s.pool == 0 || s.fc_units == 0 {
                    return Err(Error::Config("character stack sizes must be positive".into()));
                }
                self.char_stage_lengths()?;
            }
            ModelKind::WordCnn | ModelKind::HybridCnn => {
                if !channel_ok(&self.word_channel) || self.embedding_dim == 0 {
                    return Err(Error::Config("word channel sizes must be positive".into()));
                }
                if self.word_len < self.word_channel.max_width() {
                    return Err(Error::Config(format!(
                        "word length {} shorter than widest word filter",
                        self.word_len
                    )));
                }
                if self.kind == ModelKind::HybridCnn {
                    if !channel_ok(&self.char_channel) {
                        return Err(Error::Config("character channel sizes must be positive".into()));
                    }
                    if self.char_len < self.char_channel.max_width() {
                        return Err(Error::Config(format!(
                            "character length {} shorter than widest character filter",
                            self.char_len
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Sequence lengths through the CharCNN stages: input, then after each
    /// convolution and each pooling.
    pub fn char_stage_lengths(&self) -> Result<Vec<usize>> {
        let s = &self.char_stack;
        let mut lengths = vec![self.char_len];
        let mut len = self.char_len;
        for layer in 0..s.layers {
            if len < s.width {
                return Err(Error::Config(format!(
                    "character length {} too short: stage {layer} convolution sees {len} positions",
                    self.char_len
                )));
            }
            len = len - s.width + 1;
            lengths.push(len);
            if len < s.pool {
                return Err(Error::Config(format!(
                    "character length {} too short: stage {layer} pooling sees {len} positions",
                    self.char_len
                )));
            }
            len = (len - s.pool) / s.pool + 1;
            lengths.push(len);
        }
        Ok(lengths)
    }

    /// Width of the flattened CharCNN feature vector.
    pub fn char_flat_features(&self) -> Result<usize> {
        let lengths = self.char_stage_lengths()?;
        Ok(lengths.last().copied().unwrap_or(0) * self.char_stack.maps)
    }

    pub fn alphabet_size(&self) -> usize {
        ALPHABET_SIZE
    }
}
