use std::sync::Arc;

use super::vocab::{TokenVocab, Tokenizer};
use crate::error::{Error, Result};

/// Tolerance on `logsumexp(logprobs)` for a distribution to count as normalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-4;

pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Next-token distribution as natural-log probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    logprobs: Vec<f64>,
}

impl TokenDistribution {
    pub fn from_logprobs(logprobs: Vec<f64>) -> Result<Self> {
        if logprobs.is_empty() {
            return Err(Error::Integrity("empty distribution".into()));
        }
        if logprobs.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Integrity("distribution has NaN or +inf entries".into()));
        }
        let lse = logsumexp(&logprobs);
        if !(lse.abs() <= NORMALIZATION_TOLERANCE) {
            return Err(Error::Integrity(format!(
                "log-probabilities sum to exp({lse:.3e}) instead of 1"
            )));
        }
        Ok(Self { logprobs })
    }

    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|p| *p < 0.0) {
            return Err(Error::Integrity("negative probability".into()));
        }
        Self::from_logprobs(probs.iter().map(|p| p.ln()).collect())
    }

    /// Softmax of unnormalized scores.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        let lse = logsumexp(logits);
        if !lse.is_finite() {
            return Err(Error::Integrity("logits have no finite mass".into()));
        }
        Self::from_logprobs(logits.iter().map(|v| v - lse).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            logprobs: vec![-(n as f64).ln(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logprobs.is_empty()
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    pub fn logprob(&self, token: u32) -> f64 {
        self.logprobs[token as usize]
    }

    pub fn prob(&self, token: u32) -> f64 {
        self.logprob(token).exp()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.logprobs.iter().map(|v| v.exp()).collect()
    }

    /// Log of the total probability of word-boundary tokens.
    pub fn log_boundary_mass(&self, vocab: &TokenVocab) -> f64 {
        let b: Vec<f64> = self
            .logprobs
            .iter()
            .enumerate()
            .filter(|(i, _)| vocab.is_boundary(*i as u32))
            .map(|(_, v)| *v)
            .collect();
        logsumexp(&b)
    }
}

/// Source of conditional next-token distributions.
pub trait DistributionProvider: Send + Sync {
    fn tokenizer(&self) -> &Tokenizer;

    fn next_distribution(&self, prefix: &[u32]) -> Result<Arc<TokenDistribution>>;

    /// Log-probability (nats) of `continuation` following `prefix`.
    fn score(&self, prefix: &[u32], continuation: &[u32]) -> Result<f64> {
        let mut ctx = prefix.to_vec();
        let mut total = 0.0;
        for &t in continuation {
            total += self.next_distribution(&ctx)?.logprob(t);
            ctx.push(t);
        }
        Ok(total)
    }
}

impl<P: DistributionProvider + ?Sized> DistributionProvider for &P {
    fn tokenizer(&self) -> &Tokenizer {
        (**self).tokenizer()
    }

    fn next_distribution(&self, prefix: &[u32]) -> Result<Arc<TokenDistribution>> {
        (**self).next_distribution(prefix)
    }

    fn score(&self, prefix: &[u32], continuation: &[u32]) -> Result<f64> {
        (**self).score(prefix, continuation)
    }
}

/// Word log-probability (nats) including the mass of the boundary that
/// closes the word: the product of the word's token probabilities times the
/// probability that the next token starts a new word.
pub fn word_log_probability<P: DistributionProvider + ?Sized>(provider: &P, prefix: &[u32], word: &str) -> Result<f64> {
    let tokens = provider.tokenizer().tokenize(word)?;
    let body = provider.score(prefix, &tokens)?;
    let mut ctx = prefix.to_vec();
    ctx.extend_from_slice(&tokens);
    let boundary = provider
        .next_distribution(&ctx)?
        .log_boundary_mass(provider.tokenizer().vocab());
    Ok(body + boundary)
}

pub fn word_probability<P: DistributionProvider + ?Sized>(provider: &P, prefix: &[u32], word: &str) -> Result<f64> {
    word_log_probability(provider, prefix, word).map(f64::exp)
}

/// Product of token probabilities without the boundary term.
pub fn token_product_log_probability<P: DistributionProvider + ?Sized>(
    provider: &P,
    prefix: &[u32],
    word: &str,
) -> Result<f64> {
    let tokens = provider.tokenizer().tokenize(word)?;
    provider.score(prefix, &tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_checks() {
        assert!(TokenDistribution::from_probs(&[0.5, 0.5]).is_ok());
        assert!(TokenDistribution::from_probs(&[0.5, 0.6]).is_err());
        assert!(TokenDistribution::from_probs(&[0.5, 0.50004]).is_ok());
        let d = TokenDistribution::from_logits(&[1.0, 2.0, 3.0]).unwrap();
        assert!(logsumexp(d.logprobs()).abs() < 1e-15);
        assert!(TokenDistribution::from_probs(&[1.0, 0.0]).unwrap().logprob(1) == f64::NEG_INFINITY);
    }

    #[test]
    fn boundary_mass() {
        let vocab = TokenVocab::new(vec![" a".into(), "b".into(), ".".into()]).unwrap();
        let d = TokenDistribution::from_probs(&[0.2, 0.5, 0.3]).unwrap();
        assert!((d.log_boundary_mass(&vocab).exp() - 0.5).abs() < 1e-15);
    }
}
