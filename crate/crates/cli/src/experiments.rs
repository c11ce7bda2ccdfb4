//! Experiment drivers: build regression tables, run the cross-validated
//! comparisons and collect everything into a [`RunReport`].

use std::collections::BTreeMap;

use predictability::cloze::{best_cell, grid_evaluate, SmoothingFactor, SplitConfig, SWEEP_SMOOTHING};
use predictability::cloze::TransformKind;
use predictability::corpus::{match_form, ContextId, Measure, RtObservation};
use predictability::freq::DEFAULT_FLOOR_PER_BILLION;
use predictability::manip::{derive_seed, kmeans_cluster, FrequentSplit, SampleSet};
use predictability::stats::{
    columns, compare_models, compare_pair, cross_validate, make_folds, pearson_with_ci, unigram_surprisal,
    ComparisonResult, ModelSpec, PredictorTable,
};

use crate::config::{ExperimentConfig, DEFAULT_K, DEFAULT_THRESHOLD};
use crate::data::{require, Bundle, Need};
use crate::error::{CliError, Result};
use crate::predictors::{self, names, Predictor};
use crate::report::{Analysis, CorrelationRow, GridReport, RunReport};

/// Bonferroni factors used when none is configured.
pub const EXP1_COMPARISONS: usize = 12;
pub const EXP2_COMPARISONS: usize = 12;
pub const EXP3_COMPARISONS: usize = 10;

/// Regression input for one measure.
#[derive(Debug, Clone)]
pub struct MeasureTable {
    pub measure: Measure,
    pub observations: Vec<RtObservation>,
    pub table: PredictorTable,
    /// Baseline columns with nonzero variance.
    pub baseline: Vec<&'static str>,
    pub row_folds: Vec<usize>,
}

impl MeasureTable {
    pub fn baseline_refs(&self) -> Vec<&str> {
        self.baseline.to_vec()
    }
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

/// Rows of `measure` whose context every predictor covers, with baseline
/// covariates, predictor values as columns and a fold plan.
pub fn measure_table(
    bundle: &Bundle,
    config: &ExperimentConfig,
    measure: Measure,
    predictors: &[&Predictor],
    notes: &mut Vec<String>,
) -> Result<MeasureTable> {
    let all = bundle
        .rt
        .get(&measure)
        .ok_or_else(|| CliError::Config(format!("no {measure} observations loaded")))?;
    let observations: Vec<RtObservation> = all
        .iter()
        .filter(|o| predictors.iter().all(|p| p.value.contains_key(&o.context)))
        .cloned()
        .collect();
    if observations.len() < all.len() {
        notes.push(format!(
            "{measure}: {} of {} observations lack a predictor value and were left out",
            all.len() - observations.len(),
            all.len()
        ));
    }
    let mut table = PredictorTable::new(
        observations.iter().map(|o| o.rt).collect(),
        observations.iter().map(|o| o.subject_id.clone()).collect(),
    )?;

    let word = |c: &ContextId| -> Result<String> {
        Ok(bundle
            .corpus
            .word(c)
            .ok_or_else(|| predictability::Error::Reference(format!("unknown context {c}")))?
            .text
            .clone())
    };
    let mut candidates: Vec<(&'static str, Vec<f64>)> = Vec::new();
    let texts = observations.iter().map(|o| word(&o.context)).collect::<Result<Vec<_>>>()?;
    candidates.push((columns::WORD_LENGTH, texts.iter().map(|t| t.chars().count() as f64).collect()));
    candidates.push((
        columns::WORD_POSITION,
        observations.iter().map(|o| o.context.word_index as f64).collect(),
    ));
    if let Some(freq) = &bundle.freq {
        candidates.push((
            columns::UNIGRAM_SURPRISAL,
            texts
                .iter()
                .map(|t| unigram_surprisal(freq, &match_form(t), DEFAULT_FLOOR_PER_BILLION))
                .collect(),
        ));
    }
    if measure.is_eye_tracking() {
        let flags = observations
            .iter()
            .map(|o| {
                o.prev_word_fixated.map(|f| f as u8 as f64).ok_or_else(|| {
                    CliError::from(predictability::Error::Integrity(format!(
                        "{measure} observation of {} at {} has no previous-word-fixated flag",
                        o.subject_id, o.context
                    )))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        candidates.push((columns::PREV_WORD_FIXATED, flags));
    }
    let mut baseline = Vec::new();
    for (name, values) in candidates {
        if !values.is_empty() && variance(&values) == 0.0 {
            notes.push(format!("{measure}: baseline column {name} is constant and was dropped"));
            continue;
        }
        table.add_column(name, values)?;
        baseline.push(name);
    }
    for p in predictors {
        table.add_column(
            p.name.clone(),
            observations.iter().map(|o| p.value[&o.context]).collect(),
        )?;
    }
    let plan = make_folds(&observations, config.n_folds)?;
    let row_folds = plan.row_folds(&observations)?;
    Ok(MeasureTable {
        measure,
        observations,
        table,
        baseline,
        row_folds,
    })
}

/// Nested comparison of `a` and `b` on one measure; returns the number of
/// rows used and the result or its failure message.
pub fn compare_nested(
    bundle: &Bundle,
    config: &ExperimentConfig,
    measure: Measure,
    a: &Predictor,
    b: &Predictor,
    m: usize,
    notes: &mut Vec<String>,
) -> (usize, std::result::Result<ComparisonResult, String>) {
    let mt = match measure_table(bundle, config, measure, &[a, b], notes) {
        Ok(mt) => mt,
        Err(e) => return (0, Err(e.to_string())),
    };
    let result = compare_models(
        &mt.table,
        &mt.baseline_refs(),
        &a.name,
        &b.name,
        &mt.row_folds,
        config.n_folds,
        m,
        &config.cv_options(),
    );
    (mt.observations.len(), result.map_err(|e| e.to_string()))
}

/// Contexts to score: those with reading times, or every context with cloze
/// responses when no reading times were given.
fn target_contexts(bundle: &Bundle) -> Vec<ContextId> {
    if !bundle.rt.is_empty() {
        return bundle.observed_contexts();
    }
    match &bundle.cloze {
        Some(r) => bundle.corpus.contexts().filter(|c| r.get(c).is_some()).collect(),
        None => bundle.corpus.contexts().collect(),
    }
}

/// Pearson correlation between two predictors' probabilities over the
/// contexts both cover.
pub fn probability_correlation(
    a: &Predictor,
    b: &Predictor,
    resamples: usize,
    seed: u64,
) -> Result<predictability::stats::CorrelationEstimate> {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (c, pa) in &a.probability {
        if let Some(pb) = b.probability.get(c) {
            x.push(*pa);
            y.push(*pb);
        }
    }
    Ok(pearson_with_ci(&x, &y, resamples, seed)?)
}

fn push_correlation(
    report: &mut RunReport,
    predictor: &Predictor,
    cloze: &Predictor,
    config: &ExperimentConfig,
    index: u64,
) {
    match probability_correlation(predictor, cloze, config.resamples, derive_seed(config.seed, index)) {
        Ok(estimate) => report.correlations.push(CorrelationRow {
            predictor: predictor.name.clone(),
            estimate,
        }),
        Err(e) => report.notes.push(format!("correlation of {} with cloze failed: {e}", predictor.name)),
    }
}

fn cloze_predictor(bundle: &Bundle, config: &ExperimentConfig, contexts: &[ContextId]) -> Result<Predictor> {
    predictors::cloze(bundle, contexts, config.smoothing, config.transform)
}

/// Cloze versus the language model on every measure.
pub fn run_exp1(config: &ExperimentConfig) -> Result<RunReport> {
    require("exp1", config, &[Need::Cloze, Need::Rt, Need::Provider])?;
    let bundle = Bundle::load(config)?;
    run_exp1_with(&bundle, config)
}

pub fn run_exp1_with(bundle: &Bundle, config: &ExperimentConfig) -> Result<RunReport> {
    let mut report = RunReport::new("exp1");
    note_filtering(bundle, &mut report);
    let contexts = target_contexts(bundle);
    let cloze = cloze_predictor(bundle, config, &contexts)?;
    let lm = predictors::lm(bundle, &contexts, config.scope, true)?;
    let m = config.bonferroni_m.unwrap_or(EXP1_COMPARISONS);
    for measure in bundle.measures() {
        let (n_obs, outcome) = compare_nested(bundle, config, measure, &cloze, &lm, m, &mut report.notes);
        report.analyses.push(Analysis {
            measure,
            label: String::new(),
            n_obs,
            outcome,
            selected_run: None,
        });
    }
    push_correlation(&mut report, &lm, &cloze, config, 0);
    Ok(report)
}

fn note_filtering(bundle: &Bundle, report: &mut RunReport) {
    for (m, dropped) in &bundle.rt_dropped {
        let kept = bundle.rt.get(m).map_or(0, Vec::len);
        report
            .notes
            .push(format!("{m}: kept {kept} observations, filtered out {dropped}"));
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hypothesis {
    /// Resolution matching through word samples.
    H1,
    /// Cluster-level uncertainty with `k` clusters.
    H2 { k: usize },
    /// Flattened probabilities below a frequency threshold (per billion).
    H3 { threshold: f64 },
}

impl Hypothesis {
    pub fn label(&self) -> String {
        match self {
            Hypothesis::H1 => names::H1.to_string(),
            Hypothesis::H2 { k } => format!("{}_k{k}", names::H2),
            Hypothesis::H3 { threshold } => format!("{}_t{threshold}", names::H3),
        }
    }

    fn needs(&self) -> Vec<Need> {
        let mut n = vec![Need::Cloze, Need::Rt, Need::Provider];
        match self {
            Hypothesis::H1 => {}
            Hypothesis::H2 { .. } => n.push(Need::Embeddings),
            Hypothesis::H3 { .. } => n.push(Need::Freq),
        }
        n
    }

    /// Stochastic manipulations are repeated over several runs.
    fn is_stochastic(&self) -> bool {
        !matches!(self, Hypothesis::H3 { .. })
    }
}

/// Default variants of each hypothesis.
pub fn default_variants(kind: &str) -> Result<Vec<Hypothesis>> {
    match kind {
        "h1" => Ok(vec![Hypothesis::H1]),
        "h2" => Ok(vec![Hypothesis::H2 { k: DEFAULT_K }]),
        "h3" => Ok(vec![Hypothesis::H3 {
            threshold: DEFAULT_THRESHOLD,
        }]),
        other => Err(CliError::Config(format!("unknown hypothesis {other:?}; use h1, h2 or h3"))),
    }
}

/// Predictor of one hypothesis variant for one run.
fn manipulated(
    bundle: &Bundle,
    config: &ExperimentConfig,
    contexts: &[ContextId],
    hypothesis: Hypothesis,
    run: usize,
    h1_cache: &mut BTreeMap<usize, BTreeMap<ContextId, SampleSet>>,
) -> Result<Predictor> {
    let label = hypothesis.label();
    let p = match hypothesis {
        Hypothesis::H1 => {
            if !h1_cache.contains_key(&run) {
                let s = predictors::h1_samples(bundle, contexts, config.scope, config.seed, run)?;
                h1_cache.insert(run, s);
            }
            predictors::h1(bundle, &h1_cache[&run], contexts, config.smoothing, config.transform)?
        }
        Hypothesis::H2 { k } => {
            let clusters = kmeans_cluster(
                bundle.embeddings()?,
                k,
                config.kmeans_restarts,
                derive_seed(config.seed, run as u64),
            )?;
            predictors::h2(bundle, contexts, config.scope, &clusters)?
        }
        Hypothesis::H3 { threshold } => {
            let split = FrequentSplit::new(bundle.provider()?.tokenizer().vocab(), bundle.freq()?, threshold)?;
            predictors::h3(bundle, contexts, config.scope, &split)?
        }
    };
    Ok(p.renamed(label))
}

/// Index of the median run: runs are ordered by the mean gain of the
/// manipulated model (ties by run index) and the lower middle one is taken.
pub fn median_run(runs: &[(usize, f64)]) -> Option<usize> {
    if runs.is_empty() {
        return None;
    }
    let mut sorted = runs.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Some(sorted[(sorted.len() - 1) / 2].0)
}

/// Cloze versus each manipulated language-model predictor.
pub fn run_exp2(config: &ExperimentConfig, variants: &[Hypothesis]) -> Result<RunReport> {
    if variants.is_empty() {
        return Err(CliError::Config("no hypothesis variants requested".into()));
    }
    let mut needs = Vec::new();
    for v in variants {
        for n in v.needs() {
            if !needs.contains(&n) {
                needs.push(n);
            }
        }
    }
    require("exp2", config, &needs)?;
    let bundle = Bundle::load(config)?;
    run_exp2_with(&bundle, config, variants)
}

pub fn run_exp2_with(bundle: &Bundle, config: &ExperimentConfig, variants: &[Hypothesis]) -> Result<RunReport> {
    let mut report = RunReport::new("exp2");
    note_filtering(bundle, &mut report);
    let contexts = target_contexts(bundle);
    let cloze = cloze_predictor(bundle, config, &contexts)?;
    let m = config.bonferroni_m.unwrap_or(EXP2_COMPARISONS);
    let mut h1_cache = BTreeMap::new();

    for (vi, &requested) in variants.iter().enumerate() {
        let variant = match requested {
            Hypothesis::H2 { k } => {
                let v = bundle.embeddings()?.n_rows();
                if k > v {
                    report
                        .notes
                        .push(format!("{}: k clamped to the vocabulary size {v}", requested.label()));
                }
                Hypothesis::H2 { k: k.min(v) }
            }
            other => other,
        };
        let label = requested.label();
        let n_runs = if variant.is_stochastic() { config.runs } else { 1 };

        let mut per_run = Vec::with_capacity(n_runs);
        for run in 0..n_runs {
            let p = manipulated(bundle, config, &contexts, variant, run, &mut h1_cache)
                .map(|p| p.renamed(label.clone()));
            if run == 0 {
                if let Ok(p) = &p {
                    push_correlation(&mut report, p, &cloze, config, 1 + vi as u64);
                }
            }
            per_run.push(p);
        }

        for measure in bundle.measures() {
            let mut outcomes = Vec::new();
            let mut first_error = None;
            for (run, p) in per_run.iter().enumerate() {
                let p = match p {
                    Ok(p) => p,
                    Err(e) => {
                        first_error.get_or_insert_with(|| format!("run {run}: {e}"));
                        continue;
                    }
                };
                let (n_obs, outcome) = compare_nested(bundle, config, measure, &cloze, p, m, &mut report.notes);
                match outcome {
                    Ok(r) => outcomes.push((run, n_obs, r)),
                    Err(e) => {
                        first_error.get_or_insert_with(|| format!("run {run}: {e}"));
                    }
                }
            }
            let gains: Vec<(usize, f64)> = outcomes
                .iter()
                .map(|(run, _, r)| (*run, r.cv.model(&label).map_or(f64::NAN, |g| g.mean())))
                .collect();
            let analysis = match median_run(&gains) {
                Some(chosen) => {
                    let (run, n_obs, r) = outcomes.into_iter().find(|(run, ..)| *run == chosen).expect("chosen run exists");
                    if let Some(e) = &first_error {
                        report.notes.push(format!("{measure} {label}: some runs failed ({e})"));
                    }
                    Analysis {
                        measure,
                        label: label.clone(),
                        n_obs,
                        outcome: Ok(r),
                        selected_run: variant.is_stochastic().then_some(run),
                    }
                }
                None => Analysis {
                    measure,
                    label: label.clone(),
                    n_obs: 0,
                    outcome: Err(first_error.unwrap_or_else(|| "no run completed".into())),
                    selected_run: None,
                },
            };
            report.analyses.push(analysis);
        }
    }
    Ok(report)
}

/// Cloze against similarity-adjusted predictors built from cloze responses
/// and from language-model samples.
pub fn run_exp3(config: &ExperimentConfig) -> Result<RunReport> {
    require("exp3", config, &[Need::Cloze, Need::Rt, Need::Provider, Need::Embeddings])?;
    let bundle = Bundle::load(config)?;
    run_exp3_with(&bundle, config)
}

pub fn run_exp3_with(bundle: &Bundle, config: &ExperimentConfig) -> Result<RunReport> {
    let mut report = RunReport::new("exp3");
    note_filtering(bundle, &mut report);
    let contexts = target_contexts(bundle);
    let responses = bundle.cloze()?;
    if !contexts.iter().any(|c| responses.get(c).is_some()) {
        return Err(CliError::UnsupportedDataset(
            "no observed context has cloze responses to build alternative sets from".into(),
        ));
    }
    let cloze = cloze_predictor(bundle, config, &contexts)?;
    let from_cloze = predictors::cloze_alternatives(bundle, &contexts)?;
    let sa_cloze = predictors::sa(bundle, &contexts, config.scope, &from_cloze, config.similarity, names::SA_CLOZE)?;
    let samples = predictors::h1_samples(bundle, &contexts, config.scope, config.seed, 0)?;
    let from_lm = predictors::sample_alternatives(&samples);
    let sa_lm = predictors::sa(bundle, &contexts, config.scope, &from_lm, config.similarity, names::SA_LM)?;
    push_correlation(&mut report, &sa_cloze, &cloze, config, 1);
    push_correlation(&mut report, &sa_lm, &cloze, config, 2);

    let m = config.bonferroni_m.unwrap_or(EXP3_COMPARISONS);
    for measure in bundle.measures() {
        let run = || -> Result<(usize, ComparisonResult)> {
            let mut notes = Vec::new();
            let mt = measure_table(bundle, config, measure, &[&cloze, &sa_cloze, &sa_lm], &mut notes)?;
            let models = [
                ModelSpec::new(names::CLOZE, &[names::CLOZE]),
                ModelSpec::new(names::SA_CLOZE, &[names::SA_CLOZE]),
                ModelSpec::new(names::SA_LM, &[names::SA_LM]),
            ];
            let cv = cross_validate(
                &mt.table,
                &mt.baseline_refs(),
                &models,
                &mt.row_folds,
                config.n_folds,
                &config.cv_options(),
            )?;
            let comparisons = vec![
                compare_pair(&cv, names::CLOZE, names::SA_CLOZE, m)?,
                compare_pair(&cv, names::SA_CLOZE, names::SA_LM, m)?,
            ];
            Ok((mt.observations.len(), ComparisonResult { cv, comparisons }))
        };
        let (n_obs, outcome) = match run() {
            Ok((n, r)) => (n, Ok(r)),
            Err(e) => (0, Err(e.to_string())),
        };
        report.analyses.push(Analysis {
            measure,
            label: String::new(),
            n_obs,
            outcome,
            selected_run: None,
        });
    }
    Ok(report)
}

/// In-sample fit of every smoothing × transform variant of cloze.
pub fn run_grid(config: &ExperimentConfig) -> Result<RunReport> {
    require("grid", config, &[Need::Cloze, Need::Rt])?;
    let bundle = Bundle::load(config)?;
    run_grid_with(&bundle, config)
}

pub fn run_grid_with(bundle: &Bundle, config: &ExperimentConfig) -> Result<RunReport> {
    let mut report = RunReport::new("grid");
    note_filtering(bundle, &mut report);
    let responses = bundle.cloze()?;
    let smoothing = SWEEP_SMOOTHING
        .iter()
        .map(|&s| SmoothingFactor::new(s))
        .collect::<predictability::Result<Vec<_>>>()?;
    let transforms = TransformKind::sweep();
    let covered = Predictor {
        name: names::CLOZE.into(),
        probability: BTreeMap::new(),
        value: bundle
            .observed_contexts()
            .into_iter()
            .filter(|c| responses.get(c).is_some())
            .map(|c| (c, 0.0))
            .collect(),
    };
    for measure in bundle.measures() {
        let mt = measure_table(bundle, config, measure, &[&covered], &mut report.notes)?;
        let cells = grid_evaluate(
            responses,
            &bundle.corpus,
            &mt.observations,
            &mt.table,
            &mt.baseline_refs(),
            &smoothing,
            &transforms,
            SplitConfig {
                fraction: 0.5,
                seed: config.seed,
            },
        )?;
        report.grids.push(GridReport {
            measure,
            n_obs: mt.observations.len(),
            best: best_cell(&cells),
            cells,
        });
    }
    Ok(report)
}

/// Correlation of every available predictor with cloze probability.
pub fn run_correlate(config: &ExperimentConfig) -> Result<RunReport> {
    require("correlate", config, &[Need::Cloze, Need::Provider])?;
    let bundle = Bundle::load(config)?;
    run_correlate_with(&bundle, config)
}

pub fn run_correlate_with(bundle: &Bundle, config: &ExperimentConfig) -> Result<RunReport> {
    let mut report = RunReport::new("correlate");
    let contexts = target_contexts(bundle);
    let cloze = cloze_predictor(bundle, config, &contexts)?;
    let mut list: Vec<Result<Predictor>> = vec![
        predictors::lm(bundle, &contexts, config.scope, true),
        predictors::lm(bundle, &contexts, config.scope, false),
    ];
    let mut cache = BTreeMap::new();
    list.push(manipulated(bundle, config, &contexts, Hypothesis::H1, 0, &mut cache));
    if let Some(e) = &bundle.embeddings {
        let k = DEFAULT_K.min(e.n_rows());
        if k < DEFAULT_K {
            report.notes.push(format!("h2_k{DEFAULT_K}: k clamped to the vocabulary size {k}"));
        }
        let label = Hypothesis::H2 { k: DEFAULT_K }.label();
        list.push(manipulated(bundle, config, &contexts, Hypothesis::H2 { k }, 0, &mut cache).map(|p| p.renamed(label)));
    }
    if bundle.freq.is_some() {
        list.push(manipulated(
            bundle,
            config,
            &contexts,
            Hypothesis::H3 {
                threshold: DEFAULT_THRESHOLD,
            },
            0,
            &mut cache,
        ));
    }
    if bundle.embeddings.is_some() {
        let from_cloze = predictors::cloze_alternatives(bundle, &contexts)?;
        list.push(predictors::sa(bundle, &contexts, config.scope, &from_cloze, config.similarity, names::SA_CLOZE));
        let from_lm = predictors::sample_alternatives(&cache[&0]);
        list.push(predictors::sa(bundle, &contexts, config.scope, &from_lm, config.similarity, names::SA_LM));
    }
    for (i, p) in list.into_iter().enumerate() {
        match p {
            Ok(p) => push_correlation(&mut report, &p, &cloze, config, i as u64),
            Err(e) => report.notes.push(format!("predictor skipped: {e}")),
        }
    }
    if report.correlations.is_empty() {
        return Err(CliError::UnsupportedDataset("no predictor could be correlated with cloze".into()));
    }
    Ok(report)
}
