//! Text preparation: tokenization, character quantization, hashtag
//! segmentation, vocabularies and embedding tables.

mod chars;
mod embedding;
mod hashtag;
mod tokenize;
mod vocab;

pub use chars::{normalize_chars, quantize_chars, CharAlphabet, CharGrid, ALPHABET_SIZE};
pub use embedding::{
    digest_array, load_embeddings, word_vector, write_embeddings, EmbeddingTable,
};
pub use hashtag::{is_segmentable, segment_hashtag, SegScore, UnigramModel, MAX_WORD_LEN};
pub use tokenize::tokenize;
pub use vocab::{
    build_vocab, encode_words, expand_hashtags, unigram_tokens, Vocab, WordEncoder, WordIds, PAD,
    PAD_TOKEN, UNK, UNK_TOKEN,
};
