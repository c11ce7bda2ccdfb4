//! Cluster-pooled (H2) and frequency-flattened (H3) token probabilities.
//!
//! Multi-token words multiply token-level values under the chained
//! conditionals; no word-boundary mass is added.

use super::kmeans::{cluster_masses, ClusterAssignment};
use crate::error::{Error, Result};
use crate::freq::FrequencyTable;
use crate::lmcore::{strip_marker, DistributionProvider, TokenDistribution, TokenVocab};

/// Mass of the cluster containing `token`.
pub fn h2_token_probability(dist: &TokenDistribution, clusters: &ClusterAssignment, token: u32) -> Result<f64> {
    Ok(cluster_masses(dist, clusters)?[clusters.cluster_of(token)])
}

pub fn h2_probability<P: DistributionProvider + ?Sized>(
    provider: &P,
    prefix: &[u32],
    clusters: &ClusterAssignment,
    word: &str,
) -> Result<f64> {
    let tokens = provider.tokenizer().tokenize(word)?;
    let mut ctx = prefix.to_vec();
    let mut p = 1.0;
    for t in tokens {
        p *= h2_token_probability(&*provider.next_distribution(&ctx)?, clusters, t)?;
        ctx.push(t);
    }
    Ok(p)
}

/// Partition of the vocabulary into frequent and infrequent tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequentSplit {
    frequent: Vec<bool>,
    n_frequent: usize,
    threshold: f64,
}

impl FrequentSplit {
    /// A token is frequent when its marker-stripped, lowercased form occurs at
    /// least `threshold` times per billion words.
    pub fn new(vocab: &TokenVocab, freq: &FrequencyTable, threshold: f64) -> Result<Self> {
        if !(threshold.is_finite() && threshold > 0.0) {
            return Err(Error::Domain(format!("frequency threshold must be positive, got {threshold}")));
        }
        let frequent: Vec<bool> = vocab
            .tokens()
            .iter()
            .map(|t| freq.per_billion(&strip_marker(t).to_lowercase()) >= threshold)
            .collect();
        Self::from_flags(frequent, threshold)
    }

    pub fn from_flags(frequent: Vec<bool>, threshold: f64) -> Result<Self> {
        let n_frequent = frequent.iter().filter(|&&f| f).count();
        if n_frequent == 0 {
            return Err(Error::DegenerateThreshold(threshold));
        }
        Ok(Self {
            frequent,
            n_frequent,
            threshold,
        })
    }

    pub fn is_frequent(&self, token: u32) -> bool {
        self.frequent[token as usize]
    }

    pub fn n_frequent(&self) -> usize {
        self.n_frequent
    }

    pub fn len(&self) -> usize {
        self.frequent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequent.is_empty()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Flattened distribution: frequent tokens keep their relative shares of
/// `|V_F|/(|V_F|+1)`, every infrequent token gets `1/(|V_F|+1)`.
pub fn h3_distribution(dist: &TokenDistribution, split: &FrequentSplit) -> Result<Vec<f64>> {
    if dist.len() != split.len() {
        return Err(Error::Domain(format!(
            "split covers {} tokens, distribution has {}",
            split.len(),
            dist.len()
        )));
    }
    let probs = dist.probs();
    let frequent_mass: f64 = probs
        .iter()
        .enumerate()
        .filter(|(i, _)| split.frequent[*i])
        .map(|(_, p)| p)
        .sum();
    if frequent_mass <= 0.0 {
        return Err(Error::Domain("frequent tokens carry no probability mass".into()));
    }
    let nf = split.n_frequent as f64;
    let scale = nf / (nf + 1.0) / frequent_mass;
    let rare = 1.0 / (nf + 1.0);
    Ok(probs
        .iter()
        .enumerate()
        .map(|(i, p)| if split.frequent[i] { p * scale } else { rare })
        .collect())
}

pub fn h3_token_probability(dist: &TokenDistribution, split: &FrequentSplit, token: u32) -> Result<f64> {
    Ok(h3_distribution(dist, split)?[token as usize])
}

pub fn h3_probability<P: DistributionProvider + ?Sized>(
    provider: &P,
    prefix: &[u32],
    split: &FrequentSplit,
    word: &str,
) -> Result<f64> {
    let tokens = provider.tokenizer().tokenize(word)?;
    let mut ctx = prefix.to_vec();
    let mut p = 1.0;
    for t in tokens {
        p *= h3_token_probability(&*provider.next_distribution(&ctx)?, split, t)?;
        ctx.push(t);
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_token_arithmetic() {
        let d = TokenDistribution::from_probs(&[0.5, 0.3, 0.2]).unwrap();
        let split = FrequentSplit::from_flags(vec![true, true, false], 1e4).unwrap();
        let p = h3_distribution(&d, &split).unwrap();
        assert!((p[0] - (0.5 / 0.8) * (2.0 / 3.0)).abs() < 1e-12);
        assert!((p[0] - 0.416_666_666_666_666_7).abs() < 1e-12);
        assert!((p[2] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_frequent_scales_by_constant() {
        let probs = [0.1, 0.2, 0.3, 0.4];
        let d = TokenDistribution::from_probs(&probs).unwrap();
        let split = FrequentSplit::from_flags(vec![true; 4], 1.0).unwrap();
        for (q, p) in h3_distribution(&d, &split).unwrap().iter().zip(probs) {
            assert!((q - p * 4.0 / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_frequent_set() {
        assert!(matches!(
            FrequentSplit::from_flags(vec![false; 3], 1e5),
            Err(Error::DegenerateThreshold(t)) if t == 1e5
        ));
    }

    #[test]
    fn lookup_strips_marker() {
        let vocab = TokenVocab::new(vec![" The".into(), "Ġcat".into(), "<|endoftext|>".into()]).unwrap();
        let mut freq = FrequencyTable::new();
        freq.insert("the", 5e7).unwrap();
        freq.insert("cat", 2e3).unwrap();
        let split = FrequentSplit::new(&vocab, &freq, 1e4).unwrap();
        assert!(split.is_frequent(0));
        assert!(!split.is_frequent(1));
        assert!(!split.is_frequent(2));
    }

    #[test]
    fn couch_and_sofa_share_mass() {
        let d = TokenDistribution::from_probs(&[0.3, 0.2, 0.25, 0.25]).unwrap();
        let c = ClusterAssignment::from_labels(vec![0, 0, 1, 2], 3).unwrap();
        assert!(h2_token_probability(&d, &c, 0).unwrap() >= 0.5);
        assert_eq!(h2_token_probability(&d, &c, 0).unwrap(), h2_token_probability(&d, &c, 1).unwrap());
    }
}
