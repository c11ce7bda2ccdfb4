//! Experiment configuration shared by every subcommand.

use std::path::PathBuf;

use predictability::cloze::{SmoothingFactor, TransformKind};
use predictability::corpus::{ContextScope, FilterConfig, Measure};
use predictability::manip::SimilarityConfig;
use predictability::stats::{CvOptions, RandomEffectsMode};
use serde_json::{json, Value};

use crate::error::{CliError, Result};

/// Cluster counts swept for H2.
pub const SWEEP_K: [usize; 6] = [20, 40, 80, 100, 500, 1000];
/// Frequency thresholds (per billion) swept for H3.
pub const SWEEP_THRESHOLDS: [f64; 3] = [1e3, 1e4, 1e5];
pub const DEFAULT_K: usize = 80;
pub const DEFAULT_THRESHOLD: f64 = 1e4;

#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub stimuli: PathBuf,
    pub cloze: Option<PathBuf>,
    pub rt: Option<PathBuf>,
    pub dump: Option<PathBuf>,
    pub ngram: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub freq: Option<PathBuf>,
    pub samples: Option<PathBuf>,
}

impl Inputs {
    /// Named paths that were supplied, in a fixed order.
    pub fn named(&self) -> Vec<(&'static str, &PathBuf)> {
        let mut out = vec![("stimuli", &self.stimuli)];
        let optional = [
            ("cloze", &self.cloze),
            ("rt", &self.rt),
            ("dump", &self.dump),
            ("ngram", &self.ngram),
            ("embeddings", &self.embeddings),
            ("freq", &self.freq),
            ("samples", &self.samples),
        ];
        out.extend(optional.into_iter().filter_map(|(n, p)| p.as_ref().map(|p| (n, p))));
        out
    }

    pub fn check_exist(&self) -> Result<()> {
        for (_, p) in self.named() {
            if !p.is_file() {
                return Err(CliError::NotFound(p.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub inputs: Inputs,
    /// Empty means every measure present in the reading-time file.
    pub measures: Vec<Measure>,
    pub smoothing: SmoothingFactor,
    pub transform: TransformKind,
    pub n_folds: usize,
    pub runs: usize,
    pub seed: u64,
    pub bonferroni_m: Option<usize>,
    pub scope: ContextScope,
    pub filter: FilterConfig,
    pub similarity: SimilarityConfig,
    pub kmeans_restarts: usize,
    pub random_effects: RandomEffectsMode,
    pub resamples: usize,
    pub alpha: f64,
}

impl ExperimentConfig {
    pub fn new(inputs: Inputs) -> Self {
        Self {
            inputs,
            measures: Vec::new(),
            smoothing: SmoothingFactor::default(),
            transform: TransformKind::pow(2, 1),
            n_folds: 10,
            runs: 5,
            seed: 0,
            bonferroni_m: None,
            scope: ContextScope::Sentence,
            filter: FilterConfig::default(),
            similarity: SimilarityConfig::default(),
            kmeans_restarts: 10,
            random_effects: RandomEffectsMode::Conditional,
            resamples: 10_000,
            alpha: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_folds < 2 {
            return Err(CliError::Config(format!("need at least 2 folds, got {}", self.n_folds)));
        }
        if self.runs == 0 || self.kmeans_restarts == 0 {
            return Err(CliError::Config("runs and k-means restarts must be positive".into()));
        }
        if self.bonferroni_m == Some(0) {
            return Err(CliError::Config("Bonferroni factor must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }

    pub fn cv_options(&self) -> CvOptions {
        CvOptions {
            random_effects: self.random_effects,
            ..CvOptions::default()
        }
    }

    /// Canonical description used for hashing and provenance.
    pub fn to_json(&self) -> Value {
        let inputs: serde_json::Map<String, Value> = self
            .inputs
            .named()
            .into_iter()
            .map(|(n, p)| (n.to_string(), json!(p.display().to_string())))
            .collect();
        json!({
            "inputs": inputs,
            "measures": self.measures.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
            "smoothing": self.smoothing.get(),
            "transform": self.transform.to_string(),
            "n_folds": self.n_folds,
            "runs": self.runs,
            "seed": self.seed,
            "bonferroni_m": self.bonferroni_m,
            "context_scope": format!("{:?}", self.scope).to_lowercase(),
            "filter": self.filter,
            "similarity": format!("{:?}", self.similarity.kind),
            "aggregation": format!("{:?}", self.similarity.aggregation),
            "kmeans_restarts": self.kmeans_restarts,
            "random_effects": self.random_effects,
            "resamples": self.resamples,
            "alpha": self.alpha,
        })
    }
}
