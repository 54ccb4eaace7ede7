//! Word and subword tokenization, BIO alignment, n-gram features and
//! front padding of token embeddings.

mod ngram;
mod pad;
mod tokenize;
mod wordpiece;

pub use ngram::{ngram_featurize, NgramVector, DEFAULT_NGRAM_RANGE};
pub use pad::{front_pad, Matrix, PaddedEmbeddingMatrix};
pub use tokenize::{word_tokenize, word_tokenize_with_offsets, WordToken};
pub use wordpiece::{
    align_bio_to_subtokens, project_subtoken_predictions_to_words, subword_tokenize, tokenize_words,
    TokenizedText, Vocab, CLS, DEFAULT_MAX_SEQ_LEN, MASK, PAD, SEP, UNK,
};
