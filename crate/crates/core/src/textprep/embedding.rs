use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::vocab::{Vocab, PAD, UNK};
use crate::error::{Error, Result};

/// One vector per vocabulary index. The `PAD` row is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    rows: Array2<f64>,
    trainable: bool,
}

impl EmbeddingTable {
    pub fn from_rows(rows: Array2<f64>, trainable: bool) -> Self {
        EmbeddingTable { rows, trainable }
    }

    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        EmbeddingTable {
            rows: Array2::zeros((vocab_size, dim)),
            trainable: false,
        }
    }

    /// Deterministic stand-in for pretrained vectors: each word gets a
    /// vector drawn uniformly from `[-0.25, 0.25]` by a generator seeded
    /// from the word itself and `seed`, so a word's vector does not depend
    /// on the rest of the vocabulary. `PAD` and `UNK` rows are zero.
    pub fn hashed_random(vocab: &Vocab, dim: usize, seed: u64) -> Self {
        let mut rows = Array2::zeros((vocab.len(), dim));
        for (i, token) in vocab.tokens().iter().enumerate() {
            if i == PAD || i == UNK {
                continue;
            }
            let vec = word_vector(token, dim, seed);
            rows.row_mut(i).assign(&ndarray::ArrayView1::from(&vec));
        }
        EmbeddingTable {
            rows,
            trainable: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn into_rows(self) -> Array2<f64> {
        self.rows
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn digest(&self) -> String {
        digest_array(&self.rows)
    }
}

/// Hex SHA-256 over the shape and the little-endian bit patterns.
pub fn digest_array(a: &Array2<f64>) -> String {
    let mut h = Sha256::new();
    h.update((a.nrows() as u64).to_le_bytes());
    h.update((a.ncols() as u64).to_le_bytes());
    for v in a.iter() {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// The hashed-random vector of one word.
pub fn word_vector(word: &str, dim: usize, seed: u64) -> Vec<f64> {
    let digest = Sha256::digest(word.as_bytes());
    let mut key = [0u8; 8];
    key.copy_from_slice(&digest[..8]);
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(key) ^ seed);
    (0..dim).map(|_| rng.random_range(-0.25..0.25)).collect()
}

/// Reads a word2vec-style text file (`<n> <d>` header, then
/// `word v1 ... vd` per line) and keeps the rows of `vocab` words.
/// Vocabulary words missing from the file get zero rows.
pub fn load_embeddings(path: &Path, vocab: &Vocab, dim: usize) -> Result<EmbeddingTable> {
    let reader = BufReader::new(fs::File::open(path)?);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows = Array2::zeros((vocab.len(), dim));
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing `<n> <d>` header".into()))??;
    let mut fields = header.split_whitespace();
    let (Some(_n), Some(d), None) = (fields.next(), fields.next(), fields.next()) else {
        return Err(parse_err(1, "header must be `<n> <d>`".into()));
    };
    let file_dim: usize = d
        .parse()
        .map_err(|_| parse_err(1, format!("bad dimension `{d}`")))?;
    if file_dim != dim {
        return Err(Error::EmbeddingDim {
            expected: dim,
            found: file_dim,
        });
    }
    for (n, line) in lines.enumerate() {
        let line_no = n + 2;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let word = fields.next().unwrap_or_default();
        let values: Vec<f64> = fields
            .filter(|f| !f.is_empty())
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(line_no, format!("bad component: {e}")))?;
        if values.len() != dim {
            return Err(parse_err(
                line_no,
                format!("expected {dim} components, found {}", values.len()),
            ));
        }
        if let Some(i) = vocab.get(word) {
            if i != PAD {
                rows.row_mut(i).assign(&ndarray::ArrayView1::from(&values));
            }
        }
    }
    Ok(EmbeddingTable {
        rows,
        trainable: false,
    })
}

/// Writes vectors in the text format read by [`load_embeddings`].
pub fn write_embeddings(path: &Path, vectors: &HashMap<String, Vec<f64>>, dim: usize) -> Result<()> {
    let mut words: Vec<&String> = vectors.keys().collect();
    words.sort();
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{} {}", words.len(), dim)?;
    for w in words {
        write!(out, "{w}")?;
        for v in &vectors[w] {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
