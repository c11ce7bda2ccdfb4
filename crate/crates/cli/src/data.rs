//! Loading and validating the inputs an experiment needs.

use std::collections::{BTreeMap, BTreeSet};

use predictability::corpus::{
    filter_rt, load_cloze_responses, load_rt_data, load_stimuli, ClozeResponseSet, ContextId, Measure,
    RtObservation, StimulusCorpus,
};
use predictability::freq::FrequencyTable;
use predictability::lmcore::{
    load_distribution_dump, load_embeddings, DistributionProvider, EmbeddingMatrix, NgramProvider, ReplayProvider,
};
use predictability::manip::{load_sample_sets, SampleSet};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

/// Inputs a subcommand cannot run without.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Need {
    Cloze,
    Rt,
    Provider,
    Embeddings,
    Freq,
}

impl Need {
    fn flag(self) -> &'static str {
        match self {
            Need::Cloze => "--cloze",
            Need::Rt => "--rt",
            Need::Provider => "--dump or --ngram",
            Need::Embeddings => "--embeddings",
            Need::Freq => "--freq",
        }
    }
}

pub fn require(command: &str, config: &ExperimentConfig, needs: &[Need]) -> Result<()> {
    let i = &config.inputs;
    let missing: Vec<String> = needs
        .iter()
        .filter(|n| match n {
            Need::Cloze => i.cloze.is_none(),
            Need::Rt => i.rt.is_none(),
            Need::Provider => i.dump.is_none() && i.ngram.is_none(),
            Need::Embeddings => i.embeddings.is_none(),
            Need::Freq => i.freq.is_none(),
        })
        .map(|n| n.flag().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingInputs {
            command: command.to_string(),
            missing,
        });
    }
    if i.dump.is_some() && i.ngram.is_some() {
        return Err(CliError::Config("give either --dump or --ngram, not both".into()));
    }
    Ok(())
}

/// Everything loaded for one run. Reading times are filtered and grouped by
/// measure.
pub struct Bundle {
    pub corpus: StimulusCorpus,
    pub cloze: Option<ClozeResponseSet>,
    pub rt: BTreeMap<Measure, Vec<RtObservation>>,
    pub rt_dropped: BTreeMap<Measure, usize>,
    pub provider: Option<Box<dyn DistributionProvider>>,
    pub embeddings: Option<EmbeddingMatrix>,
    pub freq: Option<FrequencyTable>,
    pub samples: Option<Vec<SampleSet>>,
}

impl Bundle {
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let inputs = &config.inputs;
        inputs.check_exist()?;
        let corpus = load_stimuli(&inputs.stimuli)?;
        let cloze = inputs
            .cloze
            .as_ref()
            .map(|p| load_cloze_responses(p, &corpus))
            .transpose()?;
        let mut rt = BTreeMap::new();
        let mut rt_dropped = BTreeMap::new();
        if let Some(path) = &inputs.rt {
            let measures = if config.measures.is_empty() {
                Measure::ALL.to_vec()
            } else {
                config.measures.clone()
            };
            for m in measures {
                let all = load_rt_data(path, &corpus, m)?;
                if all.is_empty() {
                    if !config.measures.is_empty() {
                        return Err(CliError::Config(format!("no {m} observations in {}", path.display())));
                    }
                    continue;
                }
                let kept = filter_rt(&all, &corpus, &config.filter);
                rt_dropped.insert(m, all.len() - kept.len());
                rt.insert(m, kept);
            }
        }
        let provider: Option<Box<dyn DistributionProvider>> = match (&inputs.dump, &inputs.ngram) {
            (Some(p), _) => {
                let dump = load_distribution_dump(p)?;
                dump.resolve(&corpus)?;
                Some(Box::new(ReplayProvider::new(&dump, Some(&corpus), config.scope)?))
            }
            (None, Some(p)) => Some(Box::new(NgramProvider::load(p)?)),
            (None, None) => None,
        };
        let embeddings = inputs.embeddings.as_ref().map(load_embeddings).transpose()?;
        if let (Some(e), Some(p)) = (&embeddings, &provider) {
            let v = p.tokenizer().vocab().len();
            if e.n_rows() != v {
                return Err(CliError::Config(format!(
                    "embedding matrix has {} rows for a {v}-token vocabulary",
                    e.n_rows()
                )));
            }
        }
        let freq = inputs.freq.as_ref().map(FrequencyTable::load).transpose()?;
        let samples = inputs.samples.as_ref().map(load_sample_sets).transpose()?;
        if let Some(sets) = &samples {
            for s in sets {
                if let Some(c) = &s.context {
                    if !corpus.contains(c) {
                        return Err(predictability::Error::Reference(format!("samples for unknown context {c}")).into());
                    }
                }
            }
        }
        Ok(Self {
            corpus,
            cloze,
            rt,
            rt_dropped,
            provider,
            embeddings,
            freq,
            samples,
        })
    }

    pub fn provider(&self) -> Result<&dyn DistributionProvider> {
        self.provider
            .as_deref()
            .ok_or_else(|| CliError::Config("no distribution provider loaded".into()))
    }

    pub fn cloze(&self) -> Result<&ClozeResponseSet> {
        self.cloze
            .as_ref()
            .ok_or_else(|| CliError::Config("no cloze responses loaded".into()))
    }

    pub fn embeddings(&self) -> Result<&EmbeddingMatrix> {
        self.embeddings
            .as_ref()
            .ok_or_else(|| CliError::Config("no embeddings loaded".into()))
    }

    pub fn freq(&self) -> Result<&FrequencyTable> {
        self.freq
            .as_ref()
            .ok_or_else(|| CliError::Config("no frequency table loaded".into()))
    }

    pub fn measures(&self) -> Vec<Measure> {
        self.rt.keys().copied().collect()
    }

    /// Contexts observed under any measure, in corpus order.
    pub fn observed_contexts(&self) -> Vec<ContextId> {
        let seen: BTreeSet<&ContextId> = self.rt.values().flatten().map(|o| &o.context).collect();
        self.corpus.contexts().filter(|c| seen.contains(c)).collect()
    }

    /// Position of each context in corpus order, used to derive per-context
    /// seeds that do not depend on filtering.
    pub fn context_ordinals(&self) -> BTreeMap<ContextId, u64> {
        self.corpus.contexts().enumerate().map(|(i, c)| (c, i as u64)).collect()
    }
}
