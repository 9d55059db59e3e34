//! Seeded synthetic corpora for desk-scale experiments.
//!
//! Every generated text mixes signal words from its class lexicon with
//! filler words shared by all classes, and always carries at least one
//! signal word. Optionally a hashtag glued from two signal words is
//! appended so that hashtag segmentation has something to recover.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Example, Label, LabeledCorpus, Schema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassLexicon {
    pub label: Label,
    pub signal: Vec<String>,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: Vec<ClassLexicon>,
    pub filler: Vec<String>,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Probability that a token position draws from the class lexicon.
    pub signal_rate: f64,
    /// Probability of appending a two-word signal hashtag.
    pub hashtag_rate: f64,
}

const NONE_WORDS: &[&str] = &[
    "coffee", "weekend", "garden", "music", "recipe", "football", "sunset", "travel", "movie",
    "library", "puppy", "concert", "holiday", "breakfast", "beach", "painting",
];
const RACISM_WORDS: &[&str] = &[
    "varlo", "quesk", "drimt", "zobra", "kelmar", "trosk", "vundel", "praxo", "gilmot", "skarve",
];
const SEXISM_WORDS: &[&str] = &[
    "fennik", "halvo", "pruxt", "modra", "celvin", "brastel", "yomble", "nardic", "wespo",
    "lintra",
];
const FILLER_WORDS: &[&str] = &[
    "the", "a", "is", "and", "this", "that", "today", "people", "really", "just", "so", "what",
    "you", "we", "they", "about", "with", "for", "not", "all",
];

fn owned(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

impl SynthSpec {
    /// Three-class spec with the built-in lexicons and the given sizes.
    pub fn three_class(n_none: usize, n_racism: usize, n_sexism: usize) -> Self {
        SynthSpec {
            classes: vec![
                ClassLexicon {
                    label: Label::None,
                    signal: owned(NONE_WORDS),
                    size: n_none,
                },
                ClassLexicon {
                    label: Label::Racism,
                    signal: owned(RACISM_WORDS),
                    size: n_racism,
                },
                ClassLexicon {
                    label: Label::Sexism,
                    signal: owned(SEXISM_WORDS),
                    size: n_sexism,
                },
            ],
            filler: owned(FILLER_WORDS),
            min_tokens: 6,
            max_tokens: 16,
            signal_rate: 0.3,
            hashtag_rate: 0.3,
        }
    }

    /// Three-class spec of `total` examples whose label shares follow the
    /// published none/racism/sexism counts 12,427 / 2,059 / 3,864,
    /// apportioned by largest remainder.
    pub fn table_one_shares(total: usize) -> Self {
        let sizes = apportion(total, &[12_427, 2_059, 3_864]);
        Self::three_class(sizes[0], sizes[1], sizes[2])
    }

    fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Config("synthetic spec has no classes".into()));
        }
        if self.filler.is_empty() && self.signal_rate < 1.0 {
            return Err(Error::Config("filler lexicon is empty".into()));
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return Err(Error::Config(format!(
                "token range [{}, {}] is invalid",
                self.min_tokens, self.max_tokens
            )));
        }
        if !(0.0..=1.0).contains(&self.signal_rate) || !(0.0..=1.0).contains(&self.hashtag_rate) {
            return Err(Error::Config("rates must lie in [0, 1]".into()));
        }
        let mut seen = HashSet::new();
        for class in &self.classes {
            if class.signal.is_empty() {
                return Err(Error::Config(format!("lexicon for `{}` is empty", class.label)));
            }
            for w in &class.signal {
                if !seen.insert(w.as_str()) {
                    return Err(Error::Config(format!("signal word `{w}` is shared by classes")));
                }
            }
        }
        Ok(())
    }
}

/// Splits `total` proportionally to `weights` using largest remainders
/// (earlier entries win ties).
pub fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut sizes: Vec<usize> = weights.iter().map(|&w| total * w / sum).collect();
    let mut rema: Vec<(usize, usize)> =
        weights.iter().enumerate().map(|(i, &w)| (total * w % sum, i)).collect();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let missing = total - sizes.iter().sum::<usize>();
    for &(_, i) in rema.iter().take(missing) {
        sizes[i] += 1;
    }
    sizes
}

/// Generates a corpus from `spec`; identical for identical `(spec, seed)`.
pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<LabeledCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drafts: Vec<(Label, String)> = Vec::new();
    for class in &spec.classes {
        for _ in 0..class.size {
            drafts.push((class.label, synth_text(spec, class, &mut rng)));
        }
    }
    drafts.shuffle(&mut rng);
    let schema = infer_schema(spec)?;
    let examples = drafts
        .into_iter()
        .enumerate()
        .map(|(i, (label, text))| Example::new(format!("syn{i:06}"), label, text))
        .collect();
    LabeledCorpus::new(schema, examples)
}

fn infer_schema(spec: &SynthSpec) -> Result<Schema> {
    let labels: Vec<Label> = spec.classes.iter().map(|c| c.label).collect();
    [Schema::ThreeClass, Schema::NoneAbusive, Schema::RacismSexism]
        .into_iter()
        .find(|s| labels.iter().all(|&l| s.index_of(l).is_some()))
        .ok_or_else(|| Error::Config(format!("labels {labels:?} fit no schema")))
}

fn synth_text(spec: &SynthSpec, class: &ClassLexicon, rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(spec.min_tokens..=spec.max_tokens);
    let mut tokens: Vec<&str> = Vec::with_capacity(n + 1);
    let mut has_signal = false;
    for _ in 0..n {
        if rng.random_bool(spec.signal_rate) || spec.filler.is_empty() {
            tokens.push(class.signal.choose(rng).expect("validated nonempty"));
            has_signal = true;
        } else {
            tokens.push(spec.filler.choose(rng).expect("validated nonempty"));
        }
    }
    if !has_signal {
        let pos = rng.random_range(0..n);
        tokens[pos] = class.signal.choose(rng).expect("validated nonempty");
    }
    let mut text = tokens.join(" ");
    if rng.random_bool(spec.hashtag_rate) {
        let a = class.signal.choose(rng).expect("validated nonempty");
        let b = class.signal.choose(rng).expect("validated nonempty");
        text.push_str(&format!(" #{a}{b}"));
    }
    text
}
