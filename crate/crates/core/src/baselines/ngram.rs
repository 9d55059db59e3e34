use std::collections::{BTreeMap, HashMap};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::textprep::{normalize_chars, CharAlphabet};

/// Sparse count vector: strictly increasing feature indices, counts ≥ 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    entries: Vec<(usize, f64)>,
}

impl SparseVec {
    pub fn from_entries(entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Invalid("sparse indices must be strictly increasing".into()));
        }
        if entries.iter().any(|&(_, c)| c < 1.0) {
            return Err(Error::Invalid("sparse counts must be at least 1".into()));
        }
        Ok(SparseVec { entries })
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Multiplies every count by `factor`; the result may break the
    /// counts-at-least-one invariant, which only matters for validation.
    pub fn scaled(&self, factor: f64) -> SparseVec {
        SparseVec {
            entries: self.entries.iter().map(|&(i, c)| (i, c * factor)).collect(),
        }
    }
}

/// Counts of every character n-gram of `text` with `n_min ≤ n ≤ n_max`.
pub fn char_ngrams(text: &str, n_min: usize, n_max: usize) -> HashMap<String, usize> {
    let chars: Vec<char> = text.chars().collect();
    let mut counts = HashMap::new();
    for n in n_min.max(1)..=n_max {
        for window in chars.windows(n) {
            *counts.entry(window.iter().collect::<String>()).or_default() += 1;
        }
    }
    counts
}

/// Number of n-gram occurrences in a text of `len` characters.
pub fn ngram_total(len: usize, n_min: usize, n_max: usize) -> usize {
    (n_min.max(1)..=n_max).map(|n| (len + 1).saturating_sub(n)).sum()
}

/// Feature index over character n-grams, fit on training texts only.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramMap {
    n_min: usize,
    n_max: usize,
    index: BTreeMap<String, usize>,
    alphabet: CharAlphabet,
}

impl NgramMap {
    /// Keeps n-grams that occur in at least `min_df` of `texts`; indices
    /// follow lexicographic order so the map is independent of text order.
    pub fn fit<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        n_min: usize,
        n_max: usize,
        min_df: usize,
    ) -> Result<Self> {
        if n_min == 0 || n_min > n_max {
            return Err(Error::Config(format!("bad n-gram range {n_min}..={n_max}")));
        }
        let alphabet = CharAlphabet::standard();
        let mut df: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for gram in char_ngrams(&normalize_chars(text, &alphabet), n_min, n_max).into_keys() {
                *df.entry(gram).or_default() += 1;
            }
        }
        let mut kept: Vec<String> = df
            .into_iter()
            .filter(|&(_, d)| d >= min_df)
            .map(|(g, _)| g)
            .collect();
        kept.sort();
        let index = kept.into_iter().enumerate().map(|(i, g)| (g, i)).collect();
        Ok(NgramMap {
            n_min,
            n_max,
            index,
            alphabet,
        })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn range(&self) -> (usize, usize) {
        (self.n_min, self.n_max)
    }

    pub fn get(&self, gram: &str) -> Option<usize> {
        self.index.get(gram).copied()
    }

    pub fn grams(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    /// Rebuilds a map from its gram list (in index order).
    pub fn from_grams(grams: Vec<String>, n_min: usize, n_max: usize) -> Result<Self> {
        let index: BTreeMap<String, usize> =
            grams.into_iter().enumerate().map(|(i, g)| (g, i)).collect();
        if index.values().enumerate().any(|(pos, &i)| pos != i) {
            return Err(Error::Corrupt("n-gram list is not sorted and unique".into()));
        }
        Ok(NgramMap {
            n_min,
            n_max,
            index,
            alphabet: CharAlphabet::standard(),
        })
    }

    /// Counts of known n-grams in `text`; unseen n-grams are dropped.
    pub fn features(&self, text: &str) -> SparseVec {
        let grams = char_ngrams(&normalize_chars(text, &self.alphabet), self.n_min, self.n_max);
        let mut entries: Vec<(usize, f64)> = grams
            .into_iter()
            .filter_map(|(g, c)| self.get(&g).map(|i| (i, c as f64)))
            .collect();
        entries.sort_by_key(|e| e.0);
        SparseVec { entries }
    }

    /// Hex SHA-256 over the range and the ordered gram list.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_min as u64).to_le_bytes());
        h.update((self.n_max as u64).to_le_bytes());
        for g in self.index.keys() {
            h.update((g.len() as u64).to_le_bytes());
            h.update(g.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_aba() {
        let c = char_ngrams("aba", 1, 2);
        let expected: HashMap<String, usize> =
            [("a", 2), ("b", 1), ("ab", 1), ("ba", 1)].iter().map(|&(g, n)| (g.to_string(), n)).collect();
        assert_eq!(c, expected);
    }

    #[test]
    fn empty_text_is_empty() {
        assert!(char_ngrams("", 1, 4).is_empty());
        let map = NgramMap::fit(["abc", "abd"], 1, 4, 1).unwrap();
        assert!(map.features("").is_empty());
    }

    #[test]
    fn occurrence_total_has_closed_form() {
        for len in 0..12 {
            let text: String = (0..len).map(|i| (b'a' + (i % 3) as u8) as char).collect();
            let direct: usize = char_ngrams(&text, 1, 4).values().sum();
            assert_eq!(direct, ngram_total(len, 1, 4), "len {len}");
        }
    }

    #[test]
    fn min_df_and_unseen_grams() {
        let map = NgramMap::fit(["abc", "abx", "zzz"], 1, 2, 2).unwrap();
        assert!(map.get("ab").is_some());
        assert!(map.get("zz").is_none());
        let before = map.digest();
        let f = map.features("ab qq");
        assert_eq!(f.total(), 3.0); // a, b, ab
        assert_eq!(map.digest(), before);
    }

    #[test]
    fn features_are_strictly_increasing() {
        let map = NgramMap::fit(["hello world", "yellow world"], 1, 4, 1).unwrap();
        let f = map.features("Hello, World!");
        assert!(SparseVec::from_entries(f.entries().to_vec()).is_ok());
    }

    #[test]
    fn gram_list_round_trips() {
        let map = NgramMap::fit(["abc", "abd"], 1, 3, 1).unwrap();
        let grams: Vec<String> = map.grams().map(String::from).collect();
        assert_eq!(NgramMap::from_grams(grams, 1, 3).unwrap(), map);
    }

    #[test]
    fn rejects_unsorted_entries() {
        assert!(SparseVec::from_entries(vec![(3, 1.0), (2, 1.0)]).is_err());
        assert!(SparseVec::from_entries(vec![(1, 0.0)]).is_err());
    }
}
