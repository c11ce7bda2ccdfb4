//! Manipulated LM probabilities: resolution-matched sampling, cluster-pooled
//! and frequency-flattened token probabilities, and similarity-adjusted
//! probabilities.

mod hypotheses;
mod kmeans;
mod sampling;
mod similarity;

pub use hypotheses::{
    h2_probability, h2_token_probability, h3_distribution, h3_probability, h3_token_probability, FrequentSplit,
};
pub use kmeans::{cluster_masses, kmeans_cluster, ClusterAssignment, MAX_LLOYD_ITERATIONS};
pub use sampling::{
    derive_seed, h1_probability, load_sample_sets, read_sample_sets, sample_word, sample_words, write_sample_sets,
    SampleSet,
};
pub use similarity::{
    cosine, sa_probability, similarities, word_embedding, Aggregation, SimilarityConfig, SimilarityKind,
};
