//! Character-level tokenization and corpus ingestion.

mod corpus;
mod vocab;

pub use corpus::{
    load_corpus, parse_records, read_records, CorpusSplit, LoadOptions, LoadReport, RawRecord,
    SplitRole, TextSummaryPair, DEFAULT_MAX_SOURCE_LEN, DEFAULT_MAX_SUMMARY_LEN,
};
pub use vocab::{TokenId, Vocabulary, BOS, DEFAULT_VOCAB_SIZE, EOS, PAD, RESERVED, UNK};
