//! Cross-validated comparison of nested mixed-effects models.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lme::{fit_lme_with, heldout_loglik, LmeOptions, RandomEffectsMode};
use super::permutation::{bonferroni, paired_permutation_test};
use super::table::PredictorTable;
use crate::corpus::RtObservation;
use crate::error::{Error, Result};

/// (subject, item, sentence)
pub type CombinationKey = (String, String, String);

/// Assignment of subject-by-sentence combinations to folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    n_folds: usize,
    assignment: BTreeMap<CombinationKey, usize>,
}

impl CvPlan {
    /// Sorts the distinct combinations and deals them to folds round-robin.
    pub fn from_keys<I: IntoIterator<Item = CombinationKey>>(keys: I, n_folds: usize) -> Result<Self> {
        if n_folds < 2 {
            return Err(Error::Plan(format!("need at least 2 folds, got {n_folds}")));
        }
        let combos: BTreeSet<CombinationKey> = keys.into_iter().collect();
        if combos.len() < n_folds {
            return Err(Error::Plan(format!(
                "{} subject-by-sentence combinations cannot fill {n_folds} folds",
                combos.len()
            )));
        }
        let assignment = combos
            .into_iter()
            .enumerate()
            .map(|(i, k)| (k, i % n_folds))
            .collect();
        Ok(Self { n_folds, assignment })
    }

    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn n_combinations(&self) -> usize {
        self.assignment.len()
    }

    pub fn fold_of(&self, key: &CombinationKey) -> Option<usize> {
        self.assignment.get(key).copied()
    }

    pub fn assignments(&self) -> impl Iterator<Item = (&CombinationKey, usize)> {
        self.assignment.iter().map(|(k, f)| (k, *f))
    }

    /// Fold index for each observation.
    pub fn row_folds(&self, observations: &[RtObservation]) -> Result<Vec<usize>> {
        observations
            .iter()
            .map(|o| {
                self.fold_of(&combination(o))
                    .ok_or_else(|| Error::Plan(format!("observation {} / {} is not in the plan", o.subject_id, o.context)))
            })
            .collect()
    }
}

pub fn combination(o: &RtObservation) -> CombinationKey {
    (
        o.subject_id.clone(),
        o.context.item_id.clone(),
        o.context.sentence_id.clone(),
    )
}

/// Deterministic round-robin fold plan over subject-by-sentence combinations.
pub fn make_folds(observations: &[RtObservation], n_folds: usize) -> Result<CvPlan> {
    CvPlan::from_keys(observations.iter().map(combination), n_folds)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub predictors: Vec<String>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, predictors: &[&str]) -> Self {
        Self {
            name: name.into(),
            predictors: predictors.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    /// Standardize predictors on each training fold.
    pub standardize: bool,
    pub random_effects: RandomEffectsMode,
    pub lme: LmeOptions,
    /// More failed folds than this aborts the comparison.
    pub max_failed_folds: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            standardize: true,
            random_effects: RandomEffectsMode::Conditional,
            lme: LmeOptions::default(),
            max_failed_folds: 2,
        }
    }
}

/// Held-out gains of one model over the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGains {
    pub name: String,
    /// Predictors actually fitted after collinearity screening.
    pub predictors: Vec<String>,
    /// Requested predictors dropped as linear combinations of others.
    pub dropped: Vec<String>,
    /// Mean per-observation held-out log-likelihood gain per fold (nats);
    /// `None` for failed folds.
    pub per_fold: Vec<Option<f64>>,
}

impl ModelGains {
    pub fn completed(&self) -> Vec<f64> {
        self.per_fold.iter().flatten().copied().collect()
    }

    pub fn mean(&self) -> f64 {
        let v = self.completed();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn sem(&self) -> f64 {
        sem(&self.completed())
    }
}

pub fn sem(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub n_folds: usize,
    pub fold_sizes: Vec<usize>,
    pub models: Vec<ModelGains>,
    pub failed_folds: Vec<(usize, String)>,
}

impl CvResult {
    pub fn model(&self, name: &str) -> Option<&ModelGains> {
        self.models.iter().find(|m| m.name == name)
    }
}

struct Scaling {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

fn scaling(table: &PredictorTable, columns: &[&str], rows: &[usize], standardize: bool) -> Scaling {
    let mut mean = Vec::with_capacity(columns.len());
    let mut sd = Vec::with_capacity(columns.len());
    for c in columns {
        let v = table.column(c).expect("columns validated");
        if !standardize {
            mean.push(0.0);
            sd.push(1.0);
            continue;
        }
        let n = rows.len() as f64;
        let m = rows.iter().map(|&i| v[i]).sum::<f64>() / n;
        let var = rows.iter().map(|&i| (v[i] - m) * (v[i] - m)).sum::<f64>() / n;
        mean.push(m);
        sd.push(if var > 0.0 { var.sqrt() } else { 1.0 });
    }
    Scaling { mean, sd }
}

fn scaled_table(table: &PredictorTable, columns: &[&str], s: &Scaling, rows: &[usize]) -> Result<PredictorTable> {
    let mut out = PredictorTable::new(
        rows.iter().map(|&i| table.response()[i]).collect(),
        rows.iter().map(|&i| table.groups()[i].clone()).collect(),
    )?;
    for (j, c) in columns.iter().enumerate() {
        let v = table.column(c).expect("columns validated");
        out.add_column(*c, rows.iter().map(|&i| (v[i] - s.mean[j]) / s.sd[j]).collect())?;
    }
    Ok(out)
}

fn run_fold(
    table: &PredictorTable,
    baseline: &[&str],
    models: &[(String, Vec<String>)],
    all_columns: &[&str],
    row_folds: &[usize],
    fold: usize,
    opts: &CvOptions,
) -> Result<Vec<f64>> {
    let train: Vec<usize> = (0..table.n_rows()).filter(|&i| row_folds[i] != fold).collect();
    let test: Vec<usize> = (0..table.n_rows()).filter(|&i| row_folds[i] == fold).collect();
    let s = scaling(table, all_columns, &train, opts.standardize);
    let train_t = scaled_table(table, all_columns, &s, &train)?;
    let test_t = scaled_table(table, all_columns, &s, &test)?;
    let train_rows: Vec<usize> = (0..train.len()).collect();
    let test_rows: Vec<usize> = (0..test.len()).collect();

    let heldout = |cols: &[&str]| -> Result<Vec<f64>> {
        let x = train_t.design(cols, &train_rows)?;
        let fit = fit_lme_with(&x, train_t.response(), train_t.groups(), &opts.lme)?;
        let xt = test_t.design(cols, &test_rows)?;
        Ok(heldout_loglik(&fit, &xt, test_t.response(), test_t.groups(), opts.random_effects))
    };
    let base = heldout(baseline)?;
    models
        .iter()
        .map(|(_, predictors)| {
            let cols: Vec<&str> = baseline
                .iter()
                .copied()
                .chain(predictors.iter().map(String::as_str))
                .collect();
            let ll = heldout(&cols)?;
            Ok(ll.iter().zip(&base).map(|(m, b)| m - b).sum::<f64>() / ll.len() as f64)
        })
        .collect()
}

/// Fits the baseline and every model on each training split and records the
/// mean held-out per-observation log-likelihood gain over the baseline.
pub fn cross_validate(
    table: &PredictorTable,
    baseline: &[&str],
    models: &[ModelSpec],
    row_folds: &[usize],
    n_folds: usize,
    opts: &CvOptions,
) -> Result<CvResult> {
    if row_folds.len() != table.n_rows() {
        return Err(Error::Plan(format!(
            "{} fold labels for {} rows",
            row_folds.len(),
            table.n_rows()
        )));
    }
    let mut fold_sizes = vec![0usize; n_folds];
    for &f in row_folds {
        if f >= n_folds {
            return Err(Error::Plan(format!("fold index {f} out of range")));
        }
        fold_sizes[f] += 1;
    }
    if let Some(f) = fold_sizes.iter().position(|&s| s == 0) {
        return Err(Error::Plan(format!("fold {f} is empty")));
    }

    let mut screened = Vec::with_capacity(models.len());
    let mut all_columns: Vec<&str> = baseline.to_vec();
    for m in models {
        let requested: Vec<&str> = m.predictors.iter().map(String::as_str).collect();
        let (kept, dropped) = table.independent_columns(baseline, &requested)?;
        screened.push((m.name.clone(), kept, dropped));
    }
    for (_, kept, _) in &screened {
        for c in kept {
            if !all_columns.contains(&c.as_str()) {
                all_columns.push(c.as_str());
            }
        }
    }
    let fitted: Vec<(String, Vec<String>)> = screened.iter().map(|(n, k, _)| (n.clone(), k.clone())).collect();

    let per_fold: Vec<Result<Vec<f64>>> = (0..n_folds)
        .into_par_iter()
        .map(|f| run_fold(table, baseline, &fitted, &all_columns, row_folds, f, opts))
        .collect();

    let mut failed_folds = Vec::new();
    let mut gains = vec![vec![None; n_folds]; models.len()];
    for (f, res) in per_fold.into_iter().enumerate() {
        match res {
            Ok(values) => {
                for (m, v) in values.into_iter().enumerate() {
                    gains[m][f] = Some(v);
                }
            }
            Err(e) => failed_folds.push((f, e.to_string())),
        }
    }
    if failed_folds.len() > opts.max_failed_folds {
        return Err(Error::Plan(format!(
            "{} of {n_folds} folds failed; first: {}",
            failed_folds.len(),
            failed_folds[0].1
        )));
    }
    let models = screened
        .into_iter()
        .zip(gains)
        .map(|((name, predictors, dropped), per_fold)| ModelGains {
            name,
            predictors,
            dropped,
            per_fold,
        })
        .collect();
    Ok(CvResult {
        n_folds,
        fold_sizes,
        models,
        failed_folds,
    })
}

/// Paired test between the per-fold gains of two models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub label: String,
    pub first: String,
    pub second: String,
    /// Mean of (second - first) over completed folds, nats per observation.
    pub mean_difference: f64,
    /// Standard error of the paired differences across folds.
    pub sem: f64,
    pub p: f64,
    pub p_adjusted: f64,
}

impl PairedComparison {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_adjusted < alpha
    }

    /// Significant and in favour of the second model.
    pub fn significant_gain(&self, alpha: f64) -> bool {
        self.significant(alpha) && self.mean_difference > 0.0
    }
}

pub fn compare_pair(result: &CvResult, first: &str, second: &str, bonferroni_m: usize) -> Result<PairedComparison> {
    let get = |name: &str| {
        result
            .model(name)
            .ok_or_else(|| Error::Domain(format!("no model named {name:?}")))
    };
    let (a, b) = (get(first)?, get(second)?);
    let (mut va, mut vb) = (Vec::new(), Vec::new());
    for (x, y) in a.per_fold.iter().zip(&b.per_fold) {
        if let (Some(x), Some(y)) = (x, y) {
            va.push(*x);
            vb.push(*y);
        }
    }
    let p = paired_permutation_test(&va, &vb)?;
    let diffs: Vec<f64> = vb.iter().zip(&va).map(|(y, x)| y - x).collect();
    Ok(PairedComparison {
        label: format!("{first}_vs_{second}"),
        first: first.to_string(),
        second: second.to_string(),
        mean_difference: diffs.iter().sum::<f64>() / diffs.len() as f64,
        sem: sem(&diffs),
        p,
        p_adjusted: bonferroni(p, bonferroni_m),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub cv: CvResult,
    pub comparisons: Vec<PairedComparison>,
}

/// Name of the model holding both predictors in [`compare_models`].
pub const BOTH: &str = "both";

/// Nested comparison of two predictors: baseline+A, baseline+B and
/// baseline+A+B, tested as A vs Both and B vs Both.
#[allow(clippy::too_many_arguments)]
pub fn compare_models(
    table: &PredictorTable,
    baseline: &[&str],
    predictor_a: &str,
    predictor_b: &str,
    row_folds: &[usize],
    n_folds: usize,
    bonferroni_m: usize,
    opts: &CvOptions,
) -> Result<ComparisonResult> {
    let models = [
        ModelSpec::new(predictor_a, &[predictor_a]),
        ModelSpec::new(predictor_b, &[predictor_b]),
        ModelSpec::new(BOTH, &[predictor_a, predictor_b]),
    ];
    let cv = cross_validate(table, baseline, &models, row_folds, n_folds, opts)?;
    let comparisons = vec![
        compare_pair(&cv, predictor_a, BOTH, bonferroni_m)?,
        compare_pair(&cv, predictor_b, BOTH, bonferroni_m)?,
    ];
    Ok(ComparisonResult { cv, comparisons })
}
