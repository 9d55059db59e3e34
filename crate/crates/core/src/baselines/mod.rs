//! Linear and bag-of-embeddings comparison systems.

mod fasttext;
mod linear;
mod ngram;

pub use fasttext::{bigram_bucket, FastText, FastTextConfig, TokenEncoder, DEFAULT_BUCKETS};
pub use linear::{svm_lambda, Linear};
pub use ngram::{char_ngrams, ngram_total, NgramMap, SparseVec};
