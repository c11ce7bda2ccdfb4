//! Deterministic n-gram provider used as a test double and for the toy bundle.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::provider::{DistributionProvider, TokenDistribution};
use super::vocab::{TokenVocab, Tokenizer};
use crate::error::{Error, Result};

pub const MAX_TOY_VOCAB: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramRow {
    /// Conditioning tokens, most recent last; empty for the unigram row.
    pub context: Vec<u32>,
    pub probs: Vec<f64>,
}

/// Serialized n-gram table: vocabulary, segmentation and probability rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramTable {
    pub vocab: Vec<String>,
    #[serde(default)]
    pub segmentation: BTreeMap<String, Vec<u32>>,
    pub order: usize,
    pub rows: Vec<NgramRow>,
}

impl NgramTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    /// Bigram table with every row drawn uniformly from the simplex.
    pub fn seeded(tokenizer: &Tokenizer, seed: u64) -> Self {
        let v = tokenizer.vocab().len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || {
            let w: Vec<f64> = (0..v).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let mut rows = vec![NgramRow {
            context: vec![],
            probs: draw(),
        }];
        for t in 0..v as u32 {
            rows.push(NgramRow {
                context: vec![t],
                probs: draw(),
            });
        }
        Self {
            vocab: tokenizer.vocab().tokens().to_vec(),
            segmentation: tokenizer.segmentation().clone(),
            order: 2,
            rows,
        }
    }

    pub fn uniform(tokenizer: &Tokenizer) -> Self {
        let v = tokenizer.vocab().len();
        Self {
            vocab: tokenizer.vocab().tokens().to_vec(),
            segmentation: tokenizer.segmentation().clone(),
            order: 1,
            rows: vec![NgramRow {
                context: vec![],
                probs: vec![1.0 / v as f64; v],
            }],
        }
    }
}

/// Answers with the longest stored context matching the end of the prefix,
/// backing off to the unigram row.
#[derive(Debug, Clone)]
pub struct NgramProvider {
    tokenizer: Tokenizer,
    order: usize,
    rows: HashMap<Vec<u32>, Arc<TokenDistribution>>,
}

impl NgramProvider {
    pub fn new(table: &NgramTable) -> Result<Self> {
        let tokenizer = Tokenizer::new(TokenVocab::new(table.vocab.clone())?, table.segmentation.clone())?;
        let v = tokenizer.vocab().len();
        if v > MAX_TOY_VOCAB {
            return Err(Error::Domain(format!(
                "n-gram provider supports at most {MAX_TOY_VOCAB} tokens, got {v}"
            )));
        }
        if table.order == 0 {
            return Err(Error::Domain("n-gram order must be at least 1".into()));
        }
        let mut rows = HashMap::new();
        for row in &table.rows {
            if row.context.len() >= table.order {
                return Err(Error::Integrity(format!(
                    "context {:?} too long for order {}",
                    row.context, table.order
                )));
            }
            if row.probs.len() != v {
                return Err(Error::Integrity(format!(
                    "row {:?} has {} probabilities for {v} tokens",
                    row.context,
                    row.probs.len()
                )));
            }
            if row.context.iter().any(|&t| t as usize >= v) {
                return Err(Error::Integrity(format!("row context {:?} out of vocabulary", row.context)));
            }
            let dist = TokenDistribution::from_probs(&row.probs)?;
            if rows.insert(row.context.clone(), Arc::new(dist)).is_some() {
                return Err(Error::Integrity(format!("duplicate row {:?}", row.context)));
            }
        }
        if !rows.contains_key(&Vec::new()) {
            return Err(Error::Integrity("n-gram table lacks a unigram row".into()));
        }
        Ok(Self {
            tokenizer,
            order: table.order,
            rows,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(&NgramTable::load(path)?)
    }
}

impl DistributionProvider for NgramProvider {
    fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    fn next_distribution(&self, prefix: &[u32]) -> Result<Arc<TokenDistribution>> {
        for n in (0..self.order).rev() {
            if prefix.len() < n {
                continue;
            }
            if let Some(d) = self.rows.get(&prefix[prefix.len() - n..]) {
                return Ok(d.clone());
            }
        }
        unreachable!("unigram row is validated at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok() -> Tokenizer {
        Tokenizer::from_tokens(&["<|endoftext|>", " the", " cat", "s", "."]).unwrap()
    }

    #[test]
    fn seeded_is_deterministic_and_normalized() {
        let a = NgramProvider::new(&NgramTable::seeded(&tok(), 5)).unwrap();
        let b = NgramProvider::new(&NgramTable::seeded(&tok(), 5)).unwrap();
        let p = [0, 1, 2];
        assert_eq!(a.next_distribution(&p).unwrap(), b.next_distribution(&p).unwrap());
        let sum: f64 = a.next_distribution(&p).unwrap().probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_entries() {
        let p = NgramProvider::new(&NgramTable::uniform(&tok())).unwrap();
        for v in p.next_distribution(&[3, 1]).unwrap().probs() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_tables() {
        let mut t = NgramTable::uniform(&tok());
        t.rows[0].probs[0] = 0.9;
        assert!(NgramProvider::new(&t).is_err());
        let mut t = NgramTable::uniform(&tok());
        t.rows.clear();
        assert!(NgramProvider::new(&t).is_err());
        let big: Vec<String> = (0..65).map(|i| format!("t{i}")).collect();
        let refs: Vec<&str> = big.iter().map(String::as_str).collect();
        let t = NgramTable::uniform(&Tokenizer::from_tokens(&refs).unwrap());
        assert!(NgramProvider::new(&t).is_err());
    }
}
