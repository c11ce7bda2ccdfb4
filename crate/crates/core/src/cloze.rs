//! Smoothed cloze probabilities and the predictor transforms applied to them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{match_form, ClozeResponseSet, ContextId, RtObservation, StimulusCorpus};
use crate::error::{Error, Result};
use crate::stats::{fit_lme, PredictorTable};

/// Smoothing factors swept by default.
pub const SWEEP_SMOOTHING: [u32; 6] = [50, 100, 200, 500, 1000, 2000];

/// Additive smoothing denominator offset `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SmoothingFactor(u32);

impl SmoothingFactor {
    pub fn new(s: u32) -> Result<Self> {
        if s == 0 {
            return Err(Error::Domain("smoothing factor must be at least 1".into()));
        }
        Ok(Self(s))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn sweep() -> Vec<Self> {
        SWEEP_SMOOTHING.iter().map(|&s| Self(s)).collect()
    }
}

impl Default for SmoothingFactor {
    fn default() -> Self {
        Self(200)
    }
}

impl TryFrom<u32> for SmoothingFactor {
    type Error = Error;

    fn try_from(s: u32) -> Result<Self> {
        Self::new(s)
    }
}

impl From<SmoothingFactor> for u32 {
    fn from(s: SmoothingFactor) -> u32 {
        s.0
    }
}

/// Positive rational exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Exponent {
    pub num: u32,
    pub den: u32,
}

impl Exponent {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Domain(format!("exponent {num}/{den} must be positive")));
        }
        Ok(Self { num, den })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TransformKind {
    RawProb,
    Surprisal,
    SurprisalPow(Exponent),
}

impl TransformKind {
    pub const fn pow(num: u32, den: u32) -> Self {
        TransformKind::SurprisalPow(Exponent { num, den })
    }

    /// Raw probability, surprisal, and surprisal to the 1/2, 3/4, 4/3 and 2.
    pub fn sweep() -> Vec<Self> {
        vec![
            TransformKind::RawProb,
            TransformKind::Surprisal,
            TransformKind::pow(1, 2),
            TransformKind::pow(3, 4),
            TransformKind::pow(4, 3),
            TransformKind::pow(2, 1),
        ]
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformKind::RawProb => f.write_str("prob"),
            TransformKind::Surprisal => f.write_str("surprisal"),
            TransformKind::SurprisalPow(Exponent { num, den: 1 }) => write!(f, "surprisal^{num}"),
            TransformKind::SurprisalPow(Exponent { num, den }) => write!(f, "surprisal^{num}/{den}"),
        }
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "prob" => return Ok(TransformKind::RawProb),
            "surprisal" => return Ok(TransformKind::Surprisal),
            _ => {}
        }
        let exp = s
            .strip_prefix("surprisal^")
            .ok_or_else(|| Error::Domain(format!("unknown transform {s:?}")))?;
        let parse = |v: &str| {
            v.parse::<u32>()
                .map_err(|_| Error::Domain(format!("bad exponent in transform {s:?}")))
        };
        let e = match exp.split_once('/') {
            Some((n, d)) => Exponent::new(parse(n)?, parse(d)?)?,
            None => Exponent::new(parse(exp)?, 1)?,
        };
        Ok(TransformKind::SurprisalPow(e))
    }
}

impl From<TransformKind> for String {
    fn from(t: TransformKind) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for TransformKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// `(count + 1) / (total + S)`.
pub fn smoothed_probability(count: u32, total: u32, s: SmoothingFactor) -> f64 {
    (count as f64 + 1.0) / (total as f64 + s.get() as f64)
}

/// Add-one smoothed cloze probability of `word` at `context`.
pub fn cloze_probability(
    responses: &ClozeResponseSet,
    context: &ContextId,
    word: &str,
    s: SmoothingFactor,
) -> Result<f64> {
    let r = responses.lookup(context)?;
    Ok(smoothed_probability(r.count(&match_form(word)), r.total(), s))
}

/// Applies a predictor transform to a probability; surprisal is in bits.
pub fn transform(p: f64, kind: TransformKind) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("probability {p} outside (0, 1]")));
    }
    transform_log(p.ln(), kind)
}

/// Same as [`transform`] from a natural-log probability, avoiding underflow.
pub fn transform_log(logp: f64, kind: TransformKind) -> Result<f64> {
    if !(logp <= 0.0) || logp == f64::NEG_INFINITY {
        return Err(Error::Domain(format!("log-probability {logp} outside (-inf, 0]")));
    }
    // -0.0 would survive powf as 0 anyway; normalize so p = 1 gives +0.
    let bits = if logp == 0.0 { 0.0 } else { -logp / std::f64::consts::LN_2 };
    Ok(match kind {
        TransformKind::RawProb => logp.exp(),
        TransformKind::Surprisal => bits,
        TransformKind::SurprisalPow(e) => {
            if e.den == 1 {
                bits.powi(e.num as i32)
            } else {
                bits.powf(e.value())
            }
        }
    })
}

/// Seeded subject-stratified subsample: each subject contributes the first
/// `ceil(n_s * fraction)` of its shuffled rows. Returned indices are sorted.
pub fn stratified_split(groups: &[String], fraction: f64, seed: u64) -> Vec<usize> {
    let mut by_group: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_group.entry(g.as_str()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for rows in by_group.values_mut() {
        rows.shuffle(&mut rng);
        let take = ((rows.len() as f64) * fraction).ceil() as usize;
        out.extend_from_slice(&rows[..take.min(rows.len())]);
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            fraction: 0.5,
            seed: 0,
        }
    }
}

/// One smoothing × transform cell of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub smoothing: SmoothingFactor,
    pub transform: TransformKind,
    /// In-sample log-likelihood gain over the baseline, nats.
    pub gain: Option<f64>,
    pub error: Option<String>,
}

/// Column name used for the cloze predictor inside grid fits.
pub const CLOZE_COLUMN: &str = "cloze";

/// In-sample log-likelihood gain of adding each cloze predictor variant to
/// the baseline model, fitted on a subject-stratified subsample.
///
/// `baseline` rows are aligned with `rt`. Cell-level fit failures are
/// recorded on the cell; missing cloze coverage is an error.
#[allow(clippy::too_many_arguments)]
pub fn grid_evaluate(
    responses: &ClozeResponseSet,
    corpus: &StimulusCorpus,
    rt: &[RtObservation],
    baseline: &PredictorTable,
    baseline_columns: &[&str],
    smoothing: &[SmoothingFactor],
    transforms: &[TransformKind],
    split: SplitConfig,
) -> Result<Vec<GridCell>> {
    if rt.len() != baseline.n_rows() {
        return Err(Error::Design(format!(
            "{} observations but {} predictor rows",
            rt.len(),
            baseline.n_rows()
        )));
    }
    let mut counts = Vec::with_capacity(rt.len());
    for o in rt {
        let word = corpus
            .word(&o.context)
            .ok_or_else(|| Error::Reference(format!("unknown context {}", o.context)))?;
        let r = responses.lookup(&o.context)?;
        counts.push((r.count(&match_form(&word.text)), r.total()));
    }

    let rows = stratified_split(baseline.groups(), split.fraction, split.seed);
    let train = baseline.select_rows(&rows);
    let x0 = train.design(baseline_columns, &(0..rows.len()).collect::<Vec<_>>())?;
    let base_ll = fit_lme(&x0, train.response(), train.groups())?.loglik;

    let cells: Vec<(SmoothingFactor, TransformKind)> = smoothing
        .iter()
        .flat_map(|&s| transforms.iter().map(move |&t| (s, t)))
        .collect();
    Ok(cells
        .into_par_iter()
        .map(|(s, t)| {
            let gain = (|| -> Result<f64> {
                let mut values = rows
                    .iter()
                    .map(|&i| transform(smoothed_probability(counts[i].0, counts[i].1, s), t))
                    .collect::<Result<Vec<_>>>()?;
                standardize(&mut values);
                let mut table = train.clone();
                table.set_column(CLOZE_COLUMN, values)?;
                let mut cols = baseline_columns.to_vec();
                cols.push(CLOZE_COLUMN);
                let x = table.design(&cols, &(0..rows.len()).collect::<Vec<_>>())?;
                Ok(fit_lme(&x, table.response(), table.groups())?.loglik - base_ll)
            })();
            match gain {
                Ok(g) => GridCell { smoothing: s, transform: t, gain: Some(g), error: None },
                Err(e) => GridCell { smoothing: s, transform: t, gain: None, error: Some(e.to_string()) },
            }
        })
        .collect())
}

/// Index of the cell with the largest gain.
pub fn best_cell(cells: &[GridCell]) -> Option<usize> {
    cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.gain.map(|g| (i, g)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        v.iter_mut().for_each(|x| *x = (*x - m) / sd);
    }
}
