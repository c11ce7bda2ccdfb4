//! Word frequency tables in occurrences per billion words.

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Floor applied to absent or rarer-than-floor words, per billion.
pub const DEFAULT_FLOOR_PER_BILLION: f64 = 0.01;

#[derive(Debug, Clone, Default)]
pub struct FrequencyTable {
    per_billion: HashMap<String, f64>,
    pub coverage_note: Option<String>,
}

#[derive(Debug, Deserialize)]
struct FreqRow {
    word: String,
    per_billion: f64,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: &str, per_billion: f64) -> Result<()> {
        if !(per_billion.is_finite() && per_billion >= 0.0) {
            return Err(Error::Integrity(format!(
                "frequency for {word:?} must be finite and nonnegative, got {per_billion}"
            )));
        }
        self.per_billion.insert(word.to_lowercase(), per_billion);
        Ok(())
    }

    /// Occurrences per billion; 0 for absent words. Lookup is case-insensitive.
    pub fn per_billion(&self, word: &str) -> f64 {
        self.per_billion.get(&word.to_lowercase()).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.per_billion.contains_key(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.per_billion.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_billion.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file, &path.display().to_string())
    }

    pub fn read<R: Read>(reader: R, origin: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut table = Self::new();
        for rec in rdr.deserialize::<FreqRow>() {
            let row = rec.map_err(|e| Error::Parse {
                path: origin.to_string(),
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            table.insert(&row.word, row.per_billion)?;
        }
        Ok(table)
    }
}

/// Unigram surprisal in bits, `-log2(per_billion / 1e9)`, with the
/// frequency floored at `floor_per_billion`.
pub fn unigram_surprisal(freq: &FrequencyTable, word: &str, floor_per_billion: f64) -> f64 {
    let pb = freq.per_billion(word).max(floor_per_billion);
    -(pb / 1e9).log2()
}
