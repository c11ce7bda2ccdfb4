//! Similarity-weighted probability of the alternatives to a word.

use std::collections::BTreeMap;

use crate::corpus::normalize_response;
use crate::error::{Error, Result};
use crate::lmcore::{word_probability, DistributionProvider, EmbeddingMatrix, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimilarityKind {
    /// `(1 + cos) / 2`.
    #[default]
    ShiftedCosine,
    /// `1 - d / max d` with `d = (1 - cos) / 2`, the maximum taken over the
    /// response set; all-identical sets give 1.
    SetNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimilarityConfig {
    pub kind: SimilarityKind,
    pub aggregation: Aggregation,
}

/// Mean-pooled token embedding of `word`.
pub fn word_embedding(tokenizer: &Tokenizer, embeddings: &EmbeddingMatrix, word: &str) -> Result<Vec<f64>> {
    embeddings.mean_pooled(&tokenizer.tokenize(word)?)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Similarities of `target` to each of `others` under `kind`.
pub fn similarities(target: &[f64], others: &[Vec<f64>], kind: SimilarityKind) -> Vec<f64> {
    let cos: Vec<f64> = others.iter().map(|o| cosine(target, o)).collect();
    match kind {
        SimilarityKind::ShiftedCosine => cos.iter().map(|c| (1.0 + c) / 2.0).collect(),
        SimilarityKind::SetNormalized => {
            let d: Vec<f64> = cos.iter().map(|c| (1.0 - c) / 2.0).collect();
            let max = d.iter().copied().fold(0.0, f64::max);
            if max == 0.0 {
                vec![1.0; d.len()]
            } else {
                d.iter().map(|v| 1.0 - v / max).collect()
            }
        }
    }
}

/// `Σ_{r ∈ R} z(word, r) · P(r | context)`, divided by `|R|` under mean
/// aggregation. Responses the tokenizer cannot segment contribute nothing
/// but still count towards `|R|`.
pub fn sa_probability<P, S>(
    responses: &[S],
    provider: &P,
    prefix: &[u32],
    embeddings: &EmbeddingMatrix,
    word: &str,
    config: SimilarityConfig,
) -> Result<f64>
where
    P: DistributionProvider + ?Sized,
    S: AsRef<str>,
{
    if responses.is_empty() {
        return Err(Error::Domain("similarity-adjusted probability needs at least one response".into()));
    }
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    for r in responses {
        let r = normalize_response(r.as_ref());
        if r.is_empty() {
            return Err(Error::Domain("empty response".into()));
        }
        *counts.entry(r).or_insert(0) += 1;
    }
    let tokenizer = provider.tokenizer();
    let target = word_embedding(tokenizer, embeddings, &normalize_response(word))?;
    let mut weights = Vec::with_capacity(counts.len());
    let mut vectors = Vec::with_capacity(counts.len());
    let mut probs = Vec::with_capacity(counts.len());
    for (w, &c) in &counts {
        let vector = match word_embedding(tokenizer, embeddings, w) {
            Ok(v) => v,
            Err(Error::Tokenization(_)) => continue,
            Err(e) => return Err(e),
        };
        weights.push(c as f64);
        vectors.push(vector);
        probs.push(word_probability(provider, prefix, w)?);
    }
    let z = similarities(&target, &vectors, config.kind);
    let total: f64 = weights
        .iter()
        .zip(z.iter().zip(&probs))
        .map(|(c, (z, p))| c * z * p)
        .sum();
    Ok(match config.aggregation {
        Aggregation::Mean => total / responses.len() as f64,
        Aggregation::Sum => total,
    })
}
