//! Distribution dumps (`PDLM`) and the provider that replays them.
//!
//! Line 1 of a dump is a JSON header carrying the vocabulary and the word
//! segmentation table; every following line is one distribution keyed either
//! by a corpus context or by an explicit token prefix. Log-probabilities are
//! base64-encoded little-endian `f32` arrays.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::provider::{logsumexp, DistributionProvider, TokenDistribution, NORMALIZATION_TOLERANCE};
use super::vocab::{TokenVocab, Tokenizer};
use crate::corpus::{ContextId, ContextScope, StimulusCorpus};
use crate::error::{Error, Result};

pub const DUMP_MAGIC: &str = "PDLM";
pub const DUMP_VERSION: u32 = 1;

/// Rows further than this from normalized are rejected rather than repaired.
pub const DUMP_REPAIR_LIMIT: f64 = 1e-3;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    version: u32,
    vocab: Vec<String>,
    dim_v: usize,
    #[serde(default)]
    segmentation: BTreeMap<String, Vec<u32>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RowContext {
    item: String,
    sentence: String,
    word_index: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    context: Option<RowContext>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prefix: Option<Vec<u32>>,
    logprobs: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DumpKey {
    Context(ContextId),
    Prefix(Vec<u32>),
}

#[derive(Debug, Clone)]
pub struct DistributionDump {
    tokenizer: Tokenizer,
    rows: Vec<(DumpKey, TokenDistribution)>,
    index: HashMap<DumpKey, usize>,
}

impl DistributionDump {
    pub fn new(tokenizer: Tokenizer) -> Self {
        Self {
            tokenizer,
            rows: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn push(&mut self, key: DumpKey, dist: TokenDistribution) -> Result<()> {
        if dist.len() != self.tokenizer.vocab().len() {
            return Err(Error::Integrity(format!(
                "distribution of length {} for a {}-token vocabulary",
                dist.len(),
                self.tokenizer.vocab().len()
            )));
        }
        if self.index.contains_key(&key) {
            return Err(Error::Integrity(format!("duplicate dump row {key:?}")));
        }
        self.index.insert(key.clone(), self.rows.len());
        self.rows.push((key, dist));
        Ok(())
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn rows(&self) -> &[(DumpKey, TokenDistribution)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, key: &DumpKey) -> Option<&TokenDistribution> {
        self.index.get(key).map(|&i| &self.rows[i].1)
    }

    pub fn context(&self, id: &ContextId) -> Option<&TokenDistribution> {
        self.get(&DumpKey::Context(id.clone()))
    }

    /// Context-keyed rows as a map.
    pub fn by_context(&self) -> HashMap<ContextId, &TokenDistribution> {
        self.rows
            .iter()
            .filter_map(|(k, d)| match k {
                DumpKey::Context(c) => Some((c.clone(), d)),
                DumpKey::Prefix(_) => None,
            })
            .collect()
    }

    /// Checks that every context-keyed row names a word of `corpus`.
    pub fn resolve(&self, corpus: &StimulusCorpus) -> Result<()> {
        for (k, _) in &self.rows {
            if let DumpKey::Context(c) = k {
                if !corpus.contains(c) {
                    return Err(Error::Reference(format!("dump row for unknown context {c}")));
                }
            }
        }
        Ok(())
    }
}

fn format_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("dump line {line}: {msg}"))
}

pub fn load_distribution_dump(path: impl AsRef<Path>) -> Result<DistributionDump> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_distribution_dump(BufReader::new(file))
}

pub fn read_distribution_dump<R: BufRead>(reader: R) -> Result<DistributionDump> {
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| format_err(1, "missing header"))?
        .map_err(|e| format_err(1, e))?;
    let header: Header = serde_json::from_str(&header_line).map_err(|e| format_err(1, e))?;
    if header.magic != DUMP_MAGIC {
        return Err(format_err(1, format!("bad magic {:?}", header.magic)));
    }
    if header.version != DUMP_VERSION {
        return Err(format_err(1, format!("unsupported version {}", header.version)));
    }
    if header.dim_v != header.vocab.len() {
        return Err(format_err(
            1,
            format!("dim_v {} but {} vocabulary entries", header.dim_v, header.vocab.len()),
        ));
    }
    let tokenizer = Tokenizer::new(TokenVocab::new(header.vocab)?, header.segmentation)?;
    let mut dump = DistributionDump::new(tokenizer);
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line.map_err(|e| format_err(n, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line).map_err(|e| format_err(n, e))?;
        let key = match (row.context, row.prefix) {
            (Some(c), None) => DumpKey::Context(ContextId::new(c.item, c.sentence, c.word_index)),
            (None, Some(p)) => DumpKey::Prefix(p),
            _ => return Err(format_err(n, "row needs exactly one of context or prefix")),
        };
        let bytes = BASE64.decode(row.logprobs.as_bytes()).map_err(|e| format_err(n, e))?;
        if bytes.len() != 4 * header.dim_v {
            return Err(format_err(
                n,
                format!("{} bytes of log-probabilities, expected {}", bytes.len(), 4 * header.dim_v),
            ));
        }
        let mut logprobs: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let lse = logsumexp(&logprobs);
        if !(lse.abs() <= DUMP_REPAIR_LIMIT) {
            return Err(Error::Integrity(format!(
                "dump line {n}: row is off normalization by {lse:.3e}"
            )));
        }
        if lse.abs() > NORMALIZATION_TOLERANCE {
            logprobs.iter_mut().for_each(|v| *v -= lse);
        }
        dump.push(key, TokenDistribution::from_logprobs(logprobs)?)?;
    }
    Ok(dump)
}

fn encode(dist: &TokenDistribution) -> String {
    let mut bytes = Vec::with_capacity(4 * dist.len());
    for &v in dist.logprobs() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    BASE64.encode(bytes)
}

pub fn write_distribution_dump<W: Write>(dump: &DistributionDump, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let vocab = dump.tokenizer.vocab();
    let header = Header {
        magic: DUMP_MAGIC.to_string(),
        version: DUMP_VERSION,
        vocab: vocab.tokens().to_vec(),
        dim_v: vocab.len(),
        segmentation: dump.tokenizer.segmentation().clone(),
    };
    let io = |e: std::io::Error| Error::Format(format!("writing dump: {e}"));
    let json = |e: serde_json::Error| Error::Format(format!("writing dump: {e}"));
    serde_json::to_writer(&mut w, &header).map_err(json)?;
    w.write_all(b"\n").map_err(io)?;
    for (key, dist) in &dump.rows {
        let row = match key {
            DumpKey::Context(c) => Row {
                context: Some(RowContext {
                    item: c.item_id.clone(),
                    sentence: c.sentence_id.clone(),
                    word_index: c.word_index,
                }),
                prefix: None,
                logprobs: encode(dist),
            },
            DumpKey::Prefix(p) => Row {
                context: None,
                prefix: Some(p.clone()),
                logprobs: encode(dist),
            },
        };
        serde_json::to_writer(&mut w, &row).map_err(json)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save_distribution_dump(dump: &DistributionDump, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_distribution_dump(dump, file)
}

/// Serves distributions stored in a dump; unseen prefixes are coverage errors.
#[derive(Debug, Clone)]
pub struct ReplayProvider {
    tokenizer: Tokenizer,
    by_prefix: HashMap<Vec<u32>, Arc<TokenDistribution>>,
}

impl ReplayProvider {
    /// Context-keyed rows are re-keyed by the token prefix of their context,
    /// so a corpus is required whenever the dump contains any.
    pub fn new(dump: &DistributionDump, corpus: Option<&StimulusCorpus>, scope: ContextScope) -> Result<Self> {
        let mut by_prefix = HashMap::with_capacity(dump.len());
        for (key, dist) in &dump.rows {
            let prefix = match key {
                DumpKey::Prefix(p) => p.clone(),
                DumpKey::Context(c) => {
                    let corpus = corpus.ok_or_else(|| {
                        Error::Reference(format!("context row {c} needs a corpus to resolve"))
                    })?;
                    dump.tokenizer.context_prefix(corpus, c, scope)?
                }
            };
            by_prefix.insert(prefix, Arc::new(dist.clone()));
        }
        Ok(Self {
            tokenizer: dump.tokenizer.clone(),
            by_prefix,
        })
    }

    pub fn n_prefixes(&self) -> usize {
        self.by_prefix.len()
    }
}

impl DistributionProvider for ReplayProvider {
    fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    fn next_distribution(&self, prefix: &[u32]) -> Result<Arc<TokenDistribution>> {
        self.by_prefix
            .get(prefix)
            .cloned()
            .ok_or_else(|| Error::Coverage(prefix.to_vec()))
    }
}

/// Records `provider`'s distribution for each prefix as a dump.
pub fn dump_prefixes<P: DistributionProvider + ?Sized>(
    provider: &P,
    prefixes: impl IntoIterator<Item = Vec<u32>>,
) -> Result<DistributionDump> {
    let mut dump = DistributionDump::new(provider.tokenizer().clone());
    for p in prefixes {
        let key = DumpKey::Prefix(p);
        if dump.get(&key).is_some() {
            continue;
        }
        let DumpKey::Prefix(ref prefix) = key else { unreachable!() };
        let dist = provider.next_distribution(prefix)?;
        dump.push(key, (*dist).clone())?;
    }
    Ok(dump)
}
