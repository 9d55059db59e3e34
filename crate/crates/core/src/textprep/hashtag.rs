//! Unigram word model and hashtag segmentation.
//!
//! A segmentation's score is the product of its word probabilities. A
//! known word has probability `count / total`; an unknown word of `n`
//! characters gets `10 / (total * 10^n)`. Scores are compared exactly as
//! big-integer fractions, so ties are real ties and the tie rules below
//! are reproducible.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_bigint::BigUint;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Longest word considered when segmenting.
pub const MAX_WORD_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UnigramModel {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl UnigramModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a model from `(word, count)` pairs; zero counts are skipped
    /// and repeated words accumulate.
    pub fn from_counts<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut model = Self::new();
        for (w, c) in pairs {
            model.add(w, c);
        }
        model
    }

    pub fn add(&mut self, word: impl Into<String>, count: u64) {
        if count == 0 {
            return;
        }
        *self.counts.entry(word.into()).or_insert(0) += count;
        self.total += count;
    }

    pub fn merge(&mut self, other: &UnigramModel) {
        for (w, &c) in &other.counts {
            self.add(w.clone(), c);
        }
    }

    pub fn count(&self, word: &str) -> Option<u64> {
        self.counts.get(word).copied()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }

    /// Reads a `token<TAB>count` file.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)?;
        let mut model = Self::new();
        for (n, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message,
            };
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| err("expected `token<TAB>count`".into()))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| err(format!("bad count `{}`", count.trim())))?;
            model.add(word, count);
        }
        Ok(model)
    }

    /// Hex SHA-256 over the sorted `(word, count)` entries.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (w, c) in &self.counts {
            h.update((w.len() as u64).to_le_bytes());
            h.update(w.as_bytes());
            h.update(c.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Exact probability of `word` as `(numerator, denominator)`.
    pub fn probability(&self, word: &str) -> (BigUint, BigUint) {
        let total = BigUint::from(self.total.max(1));
        match self.counts.get(word) {
            Some(&c) => (BigUint::from(c), total),
            None => {
                let len = word.chars().count() as u32;
                // 10 / (total * 10^len) = 1 / (total * 10^(len-1))
                let scale = BigUint::from(10u32).pow(len.saturating_sub(1));
                (BigUint::from(1u32), total * scale)
            }
        }
    }
}

/// Exact score of a partial segmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegScore {
    num: BigUint,
    den: BigUint,
    words: usize,
}

impl SegScore {
    pub fn unit() -> Self {
        SegScore {
            num: BigUint::from(1u32),
            den: BigUint::from(1u32),
            words: 0,
        }
    }

    pub fn extend(&self, model: &UnigramModel, word: &str) -> Self {
        let (n, d) = model.probability(word);
        SegScore {
            num: &self.num * n,
            den: &self.den * d,
            words: self.words + 1,
        }
    }

    pub fn words(&self) -> usize {
        self.words
    }

    /// `Greater` when `self` is preferred: higher probability first, then
    /// fewer words.
    pub fn preference(&self, other: &SegScore) -> Ordering {
        let lhs = &self.num * &other.den;
        let rhs = &other.num * &self.den;
        lhs.cmp(&rhs).then(other.words.cmp(&self.words))
    }
}

/// Splits `tag` into the most probable sequence of words.
///
/// Dynamic programming over prefixes. At each end position the candidate
/// start positions are visited in increasing order and replaced only by a
/// strictly preferred score, so among exact ties the longest last word
/// wins, recursively. Returns `[tag]` when no split exists (empty input
/// returns an empty list).
pub fn segment_hashtag(tag: &str, model: &UnigramModel) -> Vec<String> {
    let chars: Vec<char> = tag.chars().collect();
    let n = chars.len();
    if n == 0 {
        return Vec::new();
    }
    let mut best: Vec<Option<(SegScore, usize)>> = vec![None; n + 1];
    best[0] = Some((SegScore::unit(), 0));
    for end in 1..=n {
        let first = end.saturating_sub(MAX_WORD_LEN);
        let mut chosen: Option<(SegScore, usize)> = None;
        for start in first..end {
            let Some((prefix, _)) = &best[start] else {
                continue;
            };
            let word: String = chars[start..end].iter().collect();
            let cand = prefix.extend(model, &word);
            let better = match &chosen {
                None => true,
                Some((cur, _)) => cand.preference(cur) == Ordering::Greater,
            };
            if better {
                chosen = Some((cand, start));
            }
        }
        best[end] = chosen;
    }
    if best[n].is_none() {
        return vec![tag.to_string()];
    }
    let mut words = Vec::new();
    let mut end = n;
    while end > 0 {
        let (_, start) = best[end].as_ref().expect("reachable prefix");
        words.push(chars[*start..end].iter().collect());
        end = *start;
    }
    words.reverse();
    words
}

/// Whether a `#`-stripped token is eligible for segmentation.
pub fn is_segmentable(tag: &str) -> bool {
    !tag.is_empty() && tag.chars().all(char::is_alphanumeric)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> UnigramModel {
        UnigramModel::from_counts([
            ("women", 3),
            ("against", 4),
            ("feminism", 5),
            ("wo", 1),
            ("men", 2),
        ])
    }

    #[test]
    fn splits_the_running_example() {
        let m = model();
        assert_eq!(m.total(), 15);
        assert_eq!(segment_hashtag("womenagainstfeminism", &m), ["women", "against", "feminism"]);
    }

    #[test]
    fn known_word_stays_whole() {
        assert_eq!(segment_hashtag("women", &model()), ["women"]);
    }

    #[test]
    fn oov_run_stays_whole() {
        assert_eq!(segment_hashtag("qzqzqz", &model()), ["qzqzqz"]);
    }

    #[test]
    fn oov_probability_matches_penalty() {
        let m = model();
        let (n, d) = m.probability("abc");
        // 10 / (15 * 10^3) = 1 / 1500
        assert_eq!((n, d), (BigUint::from(1u32), BigUint::from(1500u32)));
    }

    #[test]
    fn empty_tag() {
        assert!(segment_hashtag("", &model()).is_empty());
    }

    #[test]
    fn long_tag_respects_word_cap() {
        let tag = "x".repeat(60);
        let words = segment_hashtag(&tag, &model());
        assert!(words.iter().all(|w| w.chars().count() <= MAX_WORD_LEN));
        assert_eq!(words.concat(), tag);
    }

    #[test]
    fn loads_frequency_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.tsv");
        std::fs::write(&p, "cat\t3\ndog\t2\n").unwrap();
        let m = UnigramModel::load(&p).unwrap();
        assert_eq!(m.total(), 5);
        std::fs::write(&p, "cat\tthree\n").unwrap();
        assert!(matches!(UnigramModel::load(&p), Err(Error::Parse { line: 1, .. })));
    }
}
