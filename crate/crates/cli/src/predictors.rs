//! Per-context predictability predictors.

use std::collections::BTreeMap;

use predictability::cloze::{transform, transform_log, SmoothingFactor, TransformKind};
use predictability::corpus::{ContextId, ContextScope};
use predictability::lmcore::{token_product_log_probability, word_log_probability, DistributionProvider};
use predictability::manip::{
    derive_seed, h1_probability, h2_probability, h3_probability, sa_probability, sample_words, ClusterAssignment,
    Aggregation, FrequentSplit, SampleSet, SimilarityConfig,
};
use rayon::prelude::*;

use crate::data::Bundle;
use crate::error::{CliError, Result};

pub mod names {
    pub const CLOZE: &str = "cloze";
    pub const LM: &str = "lm";
    pub const LM_UNCORRECTED: &str = "lm_uncorrected";
    pub const H1: &str = "h1";
    pub const H2: &str = "h2";
    pub const H3: &str = "h3";
    pub const SA_CLOZE: &str = "sa_cloze";
    pub const SA_LM: &str = "sa_lm";
}

/// Probability and regression value of one predictor at each context it
/// covers.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub name: String,
    pub probability: BTreeMap<ContextId, f64>,
    pub value: BTreeMap<ContextId, f64>,
}

impl Predictor {
    fn from_log_probabilities(
        name: &str,
        logps: Vec<(ContextId, f64)>,
        kind: TransformKind,
    ) -> Result<Self> {
        let mut probability = BTreeMap::new();
        let mut value = BTreeMap::new();
        for (c, lp) in logps {
            value.insert(c.clone(), transform_log(lp, kind)?);
            probability.insert(c, lp.exp());
        }
        Ok(Self {
            name: name.to_string(),
            probability,
            value,
        })
    }

    fn from_probabilities(name: &str, ps: Vec<(ContextId, f64)>, kind: TransformKind) -> Result<Self> {
        let mut probability = BTreeMap::new();
        let mut value = BTreeMap::new();
        for (c, p) in ps {
            value.insert(c.clone(), transform(p, kind)?);
            probability.insert(c, p);
        }
        Ok(Self {
            name: name.to_string(),
            probability,
            value,
        })
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

fn word_of<'a>(bundle: &'a Bundle, c: &ContextId) -> Result<&'a str> {
    bundle
        .corpus
        .word(c)
        .map(|w| w.text.as_str())
        .ok_or_else(|| predictability::Error::Reference(format!("unknown context {c}")).into())
}

fn prefix_of(bundle: &Bundle, provider: &dyn DistributionProvider, c: &ContextId, scope: ContextScope) -> Result<Vec<u32>> {
    Ok(provider.tokenizer().context_prefix(&bundle.corpus, c, scope)?)
}

/// Smoothed cloze probability at every context with responses.
pub fn cloze(bundle: &Bundle, contexts: &[ContextId], s: SmoothingFactor, kind: TransformKind) -> Result<Predictor> {
    let responses = bundle.cloze()?;
    let mut ps = Vec::new();
    for c in contexts {
        if responses.get(c).is_some() {
            ps.push((c.clone(), predictability::cloze::cloze_probability(responses, c, word_of(bundle, c)?, s)?));
        }
    }
    Predictor::from_probabilities(names::CLOZE, ps, kind)
}

/// LM surprisal in bits; `corrected` adds the boundary mass after the word.
pub fn lm(bundle: &Bundle, contexts: &[ContextId], scope: ContextScope, corrected: bool) -> Result<Predictor> {
    let provider = bundle.provider()?;
    let logps = contexts
        .par_iter()
        .map(|c| {
            let prefix = prefix_of(bundle, provider, c, scope)?;
            let word = word_of(bundle, c)?;
            let lp = if corrected {
                word_log_probability(provider, &prefix, word)?
            } else {
                token_product_log_probability(provider, &prefix, word)?
            };
            Ok((c.clone(), lp))
        })
        .collect::<Result<Vec<_>>>()?;
    let name = if corrected { names::LM } else { names::LM_UNCORRECTED };
    Predictor::from_log_probabilities(name, logps, TransformKind::Surprisal)
}

/// Sample sets for run `run`: taken from the loaded sample file when there is
/// one (the `run`-th set listed for each context), otherwise drawn from the
/// provider with as many samples as the context has cloze responses.
pub fn h1_samples(
    bundle: &Bundle,
    contexts: &[ContextId],
    scope: ContextScope,
    seed: u64,
    run: usize,
) -> Result<BTreeMap<ContextId, SampleSet>> {
    if let Some(sets) = &bundle.samples {
        let mut by_context: BTreeMap<&ContextId, Vec<&SampleSet>> = BTreeMap::new();
        for s in sets {
            if let Some(c) = &s.context {
                by_context.entry(c).or_default().push(s);
            }
        }
        let mut out = BTreeMap::new();
        for c in contexts {
            let Some(list) = by_context.get(c) else { continue };
            let set = list.get(run).ok_or_else(|| {
                CliError::Config(format!("sample file has {} sets for {c}, run {run} needs more", list.len()))
            })?;
            out.insert(c.clone(), (*set).clone());
        }
        return Ok(out);
    }
    let provider = bundle.provider()?;
    let responses = bundle.cloze()?;
    let ordinals = bundle.context_ordinals();
    let run_seed = derive_seed(seed, run as u64);
    let drawn = contexts
        .par_iter()
        .filter_map(|c| responses.get(c).map(|r| (c, r.total() as usize)))
        .map(|(c, n)| {
            let prefix = prefix_of(bundle, provider, c, scope)?;
            let mut set = sample_words(provider, &prefix, n, derive_seed(run_seed, ordinals[c]))?;
            set.context = Some(c.clone());
            Ok((c.clone(), set))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(drawn.into_iter().collect())
}

/// Resolution-matched probability from word samples, transformed like cloze.
pub fn h1(
    bundle: &Bundle,
    samples: &BTreeMap<ContextId, SampleSet>,
    contexts: &[ContextId],
    s: SmoothingFactor,
    kind: TransformKind,
) -> Result<Predictor> {
    let mut ps = Vec::new();
    for c in contexts {
        if let Some(set) = samples.get(c) {
            ps.push((c.clone(), h1_probability(set, word_of(bundle, c)?, s)));
        }
    }
    Predictor::from_probabilities(names::H1, ps, kind)
}

pub fn h2(bundle: &Bundle, contexts: &[ContextId], scope: ContextScope, clusters: &ClusterAssignment) -> Result<Predictor> {
    let provider = bundle.provider()?;
    let ps = contexts
        .par_iter()
        .map(|c| {
            let prefix = prefix_of(bundle, provider, c, scope)?;
            Ok((c.clone(), h2_probability(provider, &prefix, clusters, word_of(bundle, c)?)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Predictor::from_probabilities(names::H2, ps, TransformKind::Surprisal)
}

pub fn h3(bundle: &Bundle, contexts: &[ContextId], scope: ContextScope, split: &FrequentSplit) -> Result<Predictor> {
    let provider = bundle.provider()?;
    let ps = contexts
        .par_iter()
        .map(|c| {
            let prefix = prefix_of(bundle, provider, c, scope)?;
            Ok((c.clone(), h3_probability(provider, &prefix, split, word_of(bundle, c)?)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Predictor::from_probabilities(names::H3, ps, TransformKind::Surprisal)
}

/// Similarity-adjusted surprisal with `alternatives` as the response set at
/// each context; contexts without alternatives are skipped.
pub fn sa(
    bundle: &Bundle,
    contexts: &[ContextId],
    scope: ContextScope,
    alternatives: &BTreeMap<ContextId, Vec<String>>,
    config: SimilarityConfig,
    name: &str,
) -> Result<Predictor> {
    let provider = bundle.provider()?;
    let embeddings = bundle.embeddings()?;
    let ps = contexts
        .par_iter()
        .filter_map(|c| alternatives.get(c).filter(|r| !r.is_empty()).map(|r| (c, r)))
        .map(|(c, r)| {
            let prefix = prefix_of(bundle, provider, c, scope)?;
            let p = sa_probability(r, provider, &prefix, embeddings, word_of(bundle, c)?, config)?;
            Ok((c.clone(), p))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some((c, _)) = ps.iter().find(|(_, p)| *p <= 0.0) {
        return Err(CliError::Config(format!(
            "{name}: no alternative at {c} could be scored, so the probability is zero"
        )));
    }
    match config.aggregation {
        Aggregation::Mean => Predictor::from_probabilities(name, ps, TransformKind::Surprisal),
        // A literal sum can exceed 1; its surprisal is just -log2 of the score.
        Aggregation::Sum => Ok(Predictor {
            name: name.to_string(),
            value: ps.iter().map(|(c, p)| (c.clone(), -p.log2())).collect(),
            probability: ps.into_iter().collect(),
        }),
    }
}

/// Cloze responses as alternative sets.
pub fn cloze_alternatives(bundle: &Bundle, contexts: &[ContextId]) -> Result<BTreeMap<ContextId, Vec<String>>> {
    let responses = bundle.cloze()?;
    Ok(contexts
        .iter()
        .filter_map(|c| responses.get(c).map(|r| (c.clone(), r.expanded())))
        .collect())
}

pub fn sample_alternatives(samples: &BTreeMap<ContextId, SampleSet>) -> BTreeMap<ContextId, Vec<String>> {
    samples.iter().map(|(c, s)| (c.clone(), s.samples.clone())).collect()
}
