//! Stimuli, cloze responses and reading-time observations.
//!
//! Every other module addresses words through [`ContextId`]: the word at
//! `word_index` of a sentence is predicted from the words before it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContextId {
    pub item_id: String,
    pub sentence_id: String,
    pub word_index: usize,
}

impl ContextId {
    pub fn new(item_id: impl Into<String>, sentence_id: impl Into<String>, word_index: usize) -> Self {
        Self {
            item_id: item_id.into(),
            sentence_id: sentence_id.into(),
            word_index,
        }
    }
}

impl fmt::Display for ContextId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.item_id, self.sentence_id, self.word_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordToken {
    pub word_index: usize,
    pub text: String,
    pub line_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub sentence_id: String,
    pub words: Vec<WordToken>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub item_id: String,
    pub sentences: Vec<Sentence>,
}

/// Position of a word inside its item, used for edge filtering.
#[derive(Debug, Clone, Copy)]
struct Slot {
    item: usize,
    sentence: usize,
    word: usize,
    line_edge: bool,
}

#[derive(Debug, Clone, Default)]
pub struct StimulusCorpus {
    items: Vec<Item>,
    index: HashMap<ContextId, Slot>,
}

impl StimulusCorpus {
    /// Builds a corpus from already grouped items, checking every invariant.
    pub fn from_items(items: Vec<Item>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, item) in items.iter().enumerate() {
            let mut flat: Vec<(usize, usize)> = Vec::new();
            for (s, sentence) in item.sentences.iter().enumerate() {
                if sentence.words.is_empty() {
                    return Err(Error::Integrity(format!(
                        "sentence {}/{} has no words",
                        item.item_id, sentence.sentence_id
                    )));
                }
                for (w, word) in sentence.words.iter().enumerate() {
                    if word.word_index != w {
                        return Err(Error::Integrity(format!(
                            "sentence {}/{}: word indices are not contiguous from 0 (found {} at position {w})",
                            item.item_id, sentence.sentence_id, word.word_index
                        )));
                    }
                    if word.text.trim().is_empty() {
                        return Err(Error::Integrity(format!(
                            "empty word text at {}/{}/{w}",
                            item.item_id, sentence.sentence_id
                        )));
                    }
                    flat.push((s, w));
                }
            }
            // Lines may run across sentence boundaries, so edges are computed
            // over the item's words in reading order.
            for (pos, &(s, w)) in flat.iter().enumerate() {
                let line = &item.sentences[s].words[w].line_id;
                let line_of = |p: usize| {
                    let (s, w) = flat[p];
                    &item.sentences[s].words[w].line_id
                };
                let first = pos == 0 || line_of(pos - 1) != line;
                let last = pos + 1 == flat.len() || line_of(pos + 1) != line;
                let id = ContextId::new(&item.item_id, &item.sentences[s].sentence_id, w);
                let slot = Slot {
                    item: i,
                    sentence: s,
                    word: w,
                    line_edge: line.is_some() && (first || last),
                };
                if index.insert(id.clone(), slot).is_some() {
                    return Err(Error::Integrity(format!("duplicate word {id}")));
                }
            }
        }
        Ok(Self { items, index })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn n_words(&self) -> usize {
        self.index.len()
    }

    pub fn n_sentences(&self) -> usize {
        self.items.iter().map(|i| i.sentences.len()).sum()
    }

    pub fn contains(&self, id: &ContextId) -> bool {
        self.index.contains_key(id)
    }

    pub fn word(&self, id: &ContextId) -> Option<&WordToken> {
        let slot = self.index.get(id)?;
        Some(&self.items[slot.item].sentences[slot.sentence].words[slot.word])
    }

    pub fn sentence_of(&self, id: &ContextId) -> Option<&Sentence> {
        let slot = self.index.get(id)?;
        Some(&self.items[slot.item].sentences[slot.sentence])
    }

    /// Words preceding `id`, either within its sentence or across the whole item.
    pub fn preceding_words(&self, id: &ContextId, scope: ContextScope) -> Option<Vec<&WordToken>> {
        let slot = self.index.get(id)?;
        let item = &self.items[slot.item];
        let mut out = Vec::new();
        if scope == ContextScope::Item {
            for sentence in &item.sentences[..slot.sentence] {
                out.extend(sentence.words.iter());
            }
        }
        out.extend(item.sentences[slot.sentence].words[..slot.word].iter());
        Some(out)
    }

    /// True for the first and last word of a sentence.
    pub fn is_sentence_edge(&self, id: &ContextId) -> bool {
        match self.index.get(id) {
            Some(slot) => {
                let n = self.items[slot.item].sentences[slot.sentence].words.len();
                slot.word == 0 || slot.word + 1 == n
            }
            None => false,
        }
    }

    /// True for the first and last word of a line; false when the corpus has no line data.
    pub fn is_line_edge(&self, id: &ContextId) -> bool {
        self.index.get(id).is_some_and(|s| s.line_edge)
    }

    /// All contexts in reading order.
    pub fn contexts(&self) -> impl Iterator<Item = ContextId> + '_ {
        self.items.iter().flat_map(|item| {
            item.sentences.iter().flat_map(move |s| {
                s.words
                    .iter()
                    .map(move |w| ContextId::new(&item.item_id, &s.sentence_id, w.word_index))
            })
        })
    }
}

/// How much preceding text conditions a word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextScope {
    #[default]
    Sentence,
    Item,
}

#[derive(Debug, Deserialize)]
struct StimulusRow {
    item_id: String,
    sentence_id: String,
    word_index: usize,
    word_text: String,
    #[serde(default)]
    line_id: Option<String>,
}

pub fn load_stimuli(path: impl AsRef<Path>) -> Result<StimulusCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_stimuli(file, &path.display().to_string())
}

/// Parses the stimuli CSV from any reader; `origin` labels parse errors.
pub fn read_stimuli<R: Read>(reader: R, origin: &str) -> Result<StimulusCorpus> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut items: Vec<Item> = Vec::new();
    let mut item_pos: HashMap<String, usize> = HashMap::new();
    let mut sentence_pos: HashMap<(String, String), usize> = HashMap::new();
    let mut seen: HashSet<(String, String, usize)> = HashSet::new();

    for record in rdr.deserialize::<StimulusRow>() {
        let row = record.map_err(|e| csv_error(origin, e))?;
        let key = (row.item_id.clone(), row.sentence_id.clone(), row.word_index);
        if !seen.insert(key) {
            return Err(Error::Integrity(format!(
                "duplicate word {}/{}/{}",
                row.item_id, row.sentence_id, row.word_index
            )));
        }
        let i = *item_pos.entry(row.item_id.clone()).or_insert_with(|| {
            items.push(Item {
                item_id: row.item_id.clone(),
                sentences: Vec::new(),
            });
            items.len() - 1
        });
        let s = *sentence_pos
            .entry((row.item_id.clone(), row.sentence_id.clone()))
            .or_insert_with(|| {
                items[i].sentences.push(Sentence {
                    sentence_id: row.sentence_id.clone(),
                    words: Vec::new(),
                });
                items[i].sentences.len() - 1
            });
        items[i].sentences[s].words.push(WordToken {
            word_index: row.word_index,
            text: row.word_text,
            line_id: row.line_id.filter(|l| !l.is_empty()),
        });
    }
    for item in &mut items {
        for sentence in &mut item.sentences {
            sentence.words.sort_by_key(|w| w.word_index);
        }
    }
    StimulusCorpus::from_items(items)
}

fn csv_error(origin: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        path: origin.to_string(),
        line,
        message: e.to_string(),
    }
}

/// Lower-cases, trims and keeps the first whitespace-separated token.
pub fn normalize_response(raw: &str) -> String {
    raw.split_whitespace()
        .next()
        .unwrap_or("")
        .to_lowercase()
}

/// Form of a stimulus word compared against responses and samples: the
/// normalized response form with leading and trailing punctuation removed
/// ("Mat." matches "mat"). Words made only of punctuation are kept whole.
pub fn match_form(word: &str) -> String {
    let w = normalize_response(word);
    let stripped = w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'' && c != '-');
    if stripped.is_empty() {
        w
    } else {
        stripped.to_string()
    }
}

/// Completions collected for one context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Responses {
    counts: BTreeMap<String, u32>,
    total: u32,
}

impl Responses {
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts = BTreeMap::new();
        let mut total = 0u32;
        for w in words {
            let w = normalize_response(w.as_ref());
            if w.is_empty() {
                return Err(Error::Integrity("empty cloze response".into()));
            }
            *counts.entry(w).or_insert(0) += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::Integrity("empty response list".into()));
        }
        Ok(Self { counts, total })
    }

    /// Number of responses N.
    pub fn total(&self) -> u32 {
        self.total
    }

    /// Count of `word` after normalization.
    pub fn count(&self, word: &str) -> u32 {
        self.counts.get(&normalize_response(word)).copied().unwrap_or(0)
    }

    /// Distinct responses with their counts, in sorted order.
    pub fn counts(&self) -> &BTreeMap<String, u32> {
        &self.counts
    }

    /// The multiset expanded into one entry per response.
    pub fn expanded(&self) -> Vec<String> {
        self.counts
            .iter()
            .flat_map(|(w, &c)| std::iter::repeat_n(w.clone(), c as usize))
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ClozeResponseSet {
    contexts: HashMap<ContextId, Responses>,
}

impl ClozeResponseSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: ContextId, responses: Responses) -> Result<()> {
        if self.contexts.contains_key(&id) {
            return Err(Error::Integrity(format!("duplicate cloze record for {id}")));
        }
        self.contexts.insert(id, responses);
        Ok(())
    }

    pub fn get(&self, id: &ContextId) -> Option<&Responses> {
        self.contexts.get(id)
    }

    pub fn lookup(&self, id: &ContextId) -> Result<&Responses> {
        self.get(id).ok_or_else(|| Error::MissingContext(id.clone()))
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ContextId, &Responses)> {
        self.contexts.iter()
    }
}

#[derive(Debug, Deserialize)]
struct ClozeRecord {
    item_id: String,
    sentence_id: String,
    word_index: usize,
    responses: Vec<String>,
}

pub fn load_cloze_responses(path: impl AsRef<Path>, corpus: &StimulusCorpus) -> Result<ClozeResponseSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_cloze_responses(BufReader::new(file), &path.display().to_string(), corpus)
}

pub fn read_cloze_responses<R: BufRead>(
    reader: R,
    origin: &str,
    corpus: &StimulusCorpus,
) -> Result<ClozeResponseSet> {
    let mut set = ClozeResponseSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ClozeRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: n as u64 + 1,
            message: e.to_string(),
        })?;
        let id = ContextId::new(rec.item_id, rec.sentence_id, rec.word_index);
        if !corpus.contains(&id) {
            return Err(Error::Reference(format!("cloze record for unknown context {id}")));
        }
        if rec.responses.is_empty() {
            return Err(Error::Integrity(format!("empty response list for {id}")));
        }
        let responses = Responses::from_words(&rec.responses)
            .map_err(|e| Error::Integrity(format!("{id}: {e}")))?;
        set.insert(id, responses)?;
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Measure {
    #[serde(rename = "SPR")]
    Spr,
    #[serde(rename = "FP")]
    Fp,
    #[serde(rename = "GP")]
    Gp,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Spr, Measure::Fp, Measure::Gp];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Spr => "SPR",
            Measure::Fp => "FP",
            Measure::Gp => "GP",
        }
    }

    /// Eye-tracking measures carry the previous-word-fixated covariate.
    pub fn is_eye_tracking(self) -> bool {
        matches!(self, Measure::Fp | Measure::Gp)
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SPR" => Ok(Measure::Spr),
            "FP" => Ok(Measure::Fp),
            "GP" => Ok(Measure::Gp),
            other => Err(Error::Domain(format!("unknown measure {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RtObservation {
    pub subject_id: String,
    pub context: ContextId,
    pub measure: Measure,
    pub rt: f64,
    pub prev_word_fixated: Option<bool>,
    pub trial_correct: Option<bool>,
}

#[derive(Debug, Deserialize)]
struct RtRow {
    subject_id: String,
    item_id: String,
    sentence_id: String,
    word_index: usize,
    measure: String,
    rt_ms: f64,
    #[serde(default)]
    prev_fixated: Option<u8>,
    #[serde(default)]
    correct: Option<u8>,
}

fn flag(v: Option<u8>, what: &str, line: u64) -> Result<Option<bool>> {
    match v {
        None => Ok(None),
        Some(0) => Ok(Some(false)),
        Some(1) => Ok(Some(true)),
        Some(x) => Err(Error::Integrity(format!("line {line}: {what} must be 0 or 1, got {x}"))),
    }
}

/// Loads reading times of one measure; rows of other measures are skipped.
pub fn load_rt_data(
    path: impl AsRef<Path>,
    corpus: &StimulusCorpus,
    measure: Measure,
) -> Result<Vec<RtObservation>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_rt_data(file, &path.display().to_string(), corpus, measure)
}

pub fn read_rt_data<R: Read>(
    reader: R,
    origin: &str,
    corpus: &StimulusCorpus,
    measure: Measure,
) -> Result<Vec<RtObservation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(origin, e))?.clone();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(origin, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: RtRow = record
            .deserialize(Some(&headers))
            .map_err(|e| csv_error(origin, e))?;
        let row_measure: Measure = row.measure.parse().map_err(|e: Error| Error::Parse {
            path: origin.to_string(),
            line,
            message: e.to_string(),
        })?;
        if row_measure != measure {
            continue;
        }
        let context = ContextId::new(row.item_id, row.sentence_id, row.word_index);
        if !corpus.contains(&context) {
            return Err(Error::Reference(format!("reading time for unknown context {context}")));
        }
        if !(row.rt_ms.is_finite() && row.rt_ms > 0.0) {
            return Err(Error::Integrity(format!(
                "non-positive reading time {} for subject {} at {context}",
                row.rt_ms, row.subject_id
            )));
        }
        let prev_word_fixated = flag(row.prev_fixated, "prev_fixated", line)?;
        if measure.is_eye_tracking() && prev_word_fixated.is_none() {
            return Err(Error::Integrity(format!(
                "{measure} observation at {context} lacks prev_fixated"
            )));
        }
        out.push(RtObservation {
            subject_id: row.subject_id,
            context,
            measure,
            rt: row.rt_ms,
            prev_word_fixated,
            trial_correct: flag(row.correct, "correct", line)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub spr_max_ms: f64,
    pub gp_max_ms: f64,
    pub fp_max_ms: f64,
    pub drop_sentence_edges: bool,
    pub drop_line_edges: bool,
    pub drop_incorrect_trials: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            spr_max_ms: 3000.0,
            gp_max_ms: 3000.0,
            fp_max_ms: 2000.0,
            drop_sentence_edges: true,
            drop_line_edges: true,
            drop_incorrect_trials: false,
        }
    }
}

impl FilterConfig {
    fn max_ms(&self, measure: Measure) -> f64 {
        match measure {
            Measure::Spr => self.spr_max_ms,
            Measure::Fp => self.fp_max_ms,
            Measure::Gp => self.gp_max_ms,
        }
    }

    pub fn keeps(&self, obs: &RtObservation, corpus: &StimulusCorpus) -> bool {
        if self.drop_sentence_edges && corpus.is_sentence_edge(&obs.context) {
            return false;
        }
        if self.drop_line_edges && corpus.is_line_edge(&obs.context) {
            return false;
        }
        if obs.rt > self.max_ms(obs.measure) {
            return false;
        }
        !(self.drop_incorrect_trials && obs.trial_correct == Some(false))
    }
}

/// Removes wrap-up positions, over-long reading times and (optionally)
/// incorrect trials, preserving the order of what survives.
pub fn filter_rt(
    observations: &[RtObservation],
    corpus: &StimulusCorpus,
    config: &FilterConfig,
) -> Vec<RtObservation> {
    observations
        .iter()
        .filter(|o| config.keeps(o, corpus))
        .cloned()
        .collect()
}
