//! Token vocabularies, next-token distributions and the providers serving them.
//!
//! All log-probabilities are natural logs. Word probabilities include the
//! mass of the boundary token that closes the word, so they form a proper
//! distribution over words rather than over token prefixes.

mod dump;
mod embed;
mod ngram;
mod provider;
mod vocab;

pub use dump::{
    dump_prefixes, load_distribution_dump, read_distribution_dump, save_distribution_dump,
    write_distribution_dump, DistributionDump, DumpKey, ReplayProvider, DUMP_MAGIC, DUMP_REPAIR_LIMIT, DUMP_VERSION,
};
pub use embed::{load_embeddings, read_embeddings, write_embeddings, EmbeddingMatrix};
pub use ngram::{NgramProvider, NgramRow, NgramTable, MAX_TOY_VOCAB};
pub use provider::{
    logsumexp, token_product_log_probability, word_log_probability, word_probability,
    DistributionProvider, TokenDistribution, NORMALIZATION_TOLERANCE,
};
pub use vocab::{is_word_end, strip_marker, TokenVocab, Tokenizer, END_OF_TEXT};
