use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::hashtag::{is_segmentable, segment_hashtag, UnigramModel};
use super::tokenize::tokenize;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Dense token index; `PAD` and `UNK` come first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// A vocabulary holding only the special tokens.
    pub fn specials() -> Self {
        Self::from_tokens(Vec::<String>::new())
    }

    /// Appends `tokens` after the specials, skipping duplicates.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in [PAD_TOKEN.to_string(), UNK_TOKEN.to_string()]
            .into_iter()
            .chain(tokens.into_iter().map(Into::into))
        {
            if !vocab.index.contains_key(&t) {
                vocab.index.insert(t.clone(), vocab.tokens.len());
                vocab.tokens.push(t);
            }
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Hex SHA-256 over the ordered token list.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update((t.len() as u64).to_le_bytes());
            h.update(t.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Builds a vocabulary from token sequences: tokens seen at least
/// `min_freq` times, ordered by descending frequency then lexicographically.
pub fn build_vocab<'a, I>(token_lists: I, min_freq: usize) -> Vocab
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for list in token_lists {
        for t in list {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = freq
        .into_iter()
        .filter(|&(t, n)| n >= min_freq.max(1) && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Vocab::from_tokens(kept.into_iter().map(|(t, _)| t.to_string()))
}

/// Replaces `#tag` tokens by the segmentation of `tag` (dropping the `#`).
/// Tags with non-alphanumeric characters lose the `#` but stay whole;
/// a bare `#` is kept.
pub fn expand_hashtags(tokens: &[String], model: &UnigramModel) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens {
        match t.strip_prefix('#') {
            Some(tag) if is_segmentable(tag) => out.extend(segment_hashtag(tag, model)),
            Some(tag) if !tag.is_empty() => out.push(tag.to_string()),
            _ => out.push(t.clone()),
        }
    }
    out
}

/// Word tokens of a text as used for counting unigrams: plain word tokens
/// only (hashtags, marks and placeholders excluded).
pub fn unigram_tokens(tokens: &[String]) -> impl Iterator<Item = &str> {
    tokens
        .iter()
        .map(String::as_str)
        .filter(|t| t.chars().next().is_some_and(char::is_alphanumeric))
}

/// Fixed-length word index sequence; unused positions hold `PAD`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WordIds {
    ids: Vec<usize>,
}

impl WordIds {
    pub fn from_ids(ids: Vec<usize>) -> Self {
        WordIds { ids }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Looks `tokens` up in `vocab` and pads or truncates to `length`.
/// With `segment_hashtags`, `#`-tokens are first expanded via `model`.
pub fn encode_words(
    tokens: &[String],
    vocab: &Vocab,
    length: usize,
    segment_hashtags: bool,
    model: &UnigramModel,
) -> WordIds {
    let expanded;
    let tokens = if segment_hashtags {
        expanded = expand_hashtags(tokens, model);
        &expanded
    } else {
        tokens
    };
    let mut ids: Vec<usize> = tokens.iter().take(length).map(|t| vocab.lookup(t)).collect();
    ids.resize(length, PAD);
    WordIds { ids }
}

/// Everything needed to turn text into `WordIds`.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEncoder {
    pub vocab: Vocab,
    pub unigrams: UnigramModel,
    pub length: usize,
    pub segment_hashtags: bool,
}

impl WordEncoder {
    /// Fits the unigram model (optionally seeded with external counts) and
    /// the vocabulary on `texts`.
    pub fn fit<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        length: usize,
        min_freq: usize,
        segment_hashtags: bool,
        external: Option<&UnigramModel>,
    ) -> Self {
        let tokenized: Vec<Vec<String>> = texts.into_iter().map(tokenize).collect();
        let mut unigrams = UnigramModel::new();
        for toks in &tokenized {
            for t in unigram_tokens(toks) {
                unigrams.add(t, 1);
            }
        }
        if let Some(ext) = external {
            unigrams.merge(ext);
        }
        let words: Vec<Vec<String>> = if segment_hashtags {
            tokenized.iter().map(|t| expand_hashtags(t, &unigrams)).collect()
        } else {
            tokenized
        };
        let vocab = build_vocab(words.iter().map(Vec::as_slice), min_freq);
        WordEncoder {
            vocab,
            unigrams,
            length,
            segment_hashtags,
        }
    }

    pub fn encode(&self, text: &str) -> WordIds {
        encode_words(
            &tokenize(text),
            &self.vocab,
            self.length,
            self.segment_hashtags,
            &self.unigrams,
        )
    }
}
