use std::collections::HashMap;

use sha2::{Digest, Sha256};

/// Marks of the character alphabet besides letters, digits, space and
/// newline.
const MARKS: &str = "-,;.!?:'\"/\\|_@#$%^&*~`+=<>()[]{}";

/// Number of symbols in the character alphabet.
pub const ALPHABET_SIZE: usize = 70;

/// The 70-symbol character alphabet: 26 lowercase letters, 10 digits, 32
/// punctuation marks, space and newline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharAlphabet {
    symbols: Vec<char>,
    index: HashMap<char, u8>,
}

impl CharAlphabet {
    pub fn standard() -> Self {
        let symbols: Vec<char> = ('a'..='z')
            .chain('0'..='9')
            .chain(MARKS.chars())
            .chain([' ', '\n'])
            .collect();
        debug_assert_eq!(symbols.len(), ALPHABET_SIZE);
        let index = symbols.iter().enumerate().map(|(i, &c)| (c, i as u8)).collect();
        CharAlphabet { symbols, index }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn index_of(&self, c: char) -> Option<u8> {
        self.index.get(&c).copied()
    }

    pub fn symbol(&self, index: u8) -> Option<char> {
        self.symbols.get(index as usize).copied()
    }

    /// Hex SHA-256 over the ordered symbols.
    pub fn digest(&self) -> String {
        let s: String = self.symbols.iter().collect();
        hex::encode(Sha256::digest(s.as_bytes()))
    }
}

impl Default for CharAlphabet {
    fn default() -> Self {
        Self::standard()
    }
}

/// Fixed-length character encoding of one text; `None` is padding.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CharGrid {
    indices: Vec<Option<u8>>,
}

impl CharGrid {
    pub fn from_indices(indices: Vec<Option<u8>>) -> Self {
        CharGrid { indices }
    }

    pub fn indices(&self) -> &[Option<u8>] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The encoded symbols as a string, padding omitted.
    pub fn decode(&self, alphabet: &CharAlphabet) -> String {
        self.indices
            .iter()
            .flatten()
            .filter_map(|&i| alphabet.symbol(i))
            .collect()
    }
}

/// Lowercases `text`, drops characters outside the alphabet and pads or
/// truncates to `length` positions.
pub fn quantize_chars(text: &str, alphabet: &CharAlphabet, length: usize) -> CharGrid {
    let mut indices: Vec<Option<u8>> = text
        .chars()
        .flat_map(char::to_lowercase)
        .filter_map(|c| alphabet.index_of(c))
        .take(length)
        .map(Some)
        .collect();
    indices.resize(length, None);
    CharGrid { indices }
}

/// The text as it survives quantization (lowercased, out-of-alphabet
/// characters removed), without length limits.
pub fn normalize_chars(text: &str, alphabet: &CharAlphabet) -> String {
    text.chars()
        .flat_map(char::to_lowercase)
        .filter(|&c| alphabet.index_of(c).is_some())
        .collect()
}
