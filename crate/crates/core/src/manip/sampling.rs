use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloze::{smoothed_probability, SmoothingFactor};
use crate::corpus::{match_form, normalize_response, ContextId};
use crate::error::{Error, Result};
use crate::lmcore::{DistributionProvider, TokenDistribution};

/// Words sampled from a provider for one context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    pub context: Option<ContextId>,
    pub seed: u64,
    pub samples: Vec<String>,
}

impl SampleSet {
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    /// Occurrences of `word`, compared case-insensitively.
    pub fn count(&self, word: &str) -> usize {
        let w = match_form(word);
        self.samples.iter().filter(|s| normalize_response(s) == w).count()
    }
}

/// SplitMix64 step, used to derive independent per-context seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn draw<R: Rng>(dist: &TokenDistribution, rng: &mut R) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, lp) in dist.logprobs().iter().enumerate() {
        let p = lp.exp();
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i as u32;
        }
    }
    last_positive as u32
}

/// Draws one word: tokens are drawn until a word-ending token follows, for
/// at most three word tokens. When neither the second nor the third token
/// ends the word, the first three tokens are taken as the word whatever
/// follows them, so the fourth token is never drawn.
pub fn sample_word<P, R>(provider: &P, prefix: &[u32], rng: &mut R) -> Result<String>
where
    P: DistributionProvider + ?Sized,
    R: Rng,
{
    let vocab = provider.tokenizer().vocab();
    let mut ctx = prefix.to_vec();
    let mut word = Vec::with_capacity(3);
    let t0 = draw(&*provider.next_distribution(&ctx)?, rng);
    word.push(t0);
    ctx.push(t0);
    for _ in 0..2 {
        let t = draw(&*provider.next_distribution(&ctx)?, rng);
        if vocab.is_boundary(t) {
            break;
        }
        word.push(t);
        ctx.push(t);
    }
    Ok(provider.tokenizer().detokenize(&word))
}

/// `n` seeded word samples for the context given by `prefix`.
pub fn sample_words<P: DistributionProvider + ?Sized>(
    provider: &P,
    prefix: &[u32],
    n: usize,
    seed: u64,
) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| sample_word(provider, prefix, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSet {
        context: None,
        seed,
        samples,
    })
}

/// Resolution-matched probability `(C_w + 1) / (N + S)` from word samples.
pub fn h1_probability(samples: &SampleSet, word: &str, s: SmoothingFactor) -> f64 {
    smoothed_probability(samples.count(word) as u32, samples.n() as u32, s)
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleContext {
    item: String,
    sentence: String,
    word_index: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    context: SampleContext,
    seed: u64,
    samples: Vec<String>,
}

pub fn read_sample_sets<R: BufRead>(reader: R) -> Result<Vec<SampleSet>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Format(format!("sample line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord =
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("sample line {}: {e}", i + 1)))?;
        out.push(SampleSet {
            context: Some(ContextId::new(rec.context.item, rec.context.sentence, rec.context.word_index)),
            seed: rec.seed,
            samples: rec.samples,
        });
    }
    Ok(out)
}

pub fn load_sample_sets(path: impl AsRef<Path>) -> Result<Vec<SampleSet>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_sample_sets(BufReader::new(file))
}

pub fn write_sample_sets<W: Write>(sets: &[SampleSet], writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for s in sets {
        let c = s
            .context
            .as_ref()
            .ok_or_else(|| Error::Domain("sample set without a context cannot be written".into()))?;
        let rec = SampleRecord {
            context: SampleContext {
                item: c.item_id.clone(),
                sentence: c.sentence_id.clone(),
                word_index: c.word_index,
            },
            seed: s.seed,
            samples: s.samples.clone(),
        };
        let line = serde_json::to_string(&rec).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::Format(format!("writing samples: {e}")))?;
    }
    w.flush().map_err(|e| Error::Format(format!("writing samples: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(words: &[&str]) -> SampleSet {
        SampleSet {
            context: None,
            seed: 0,
            samples: words.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn h1_arithmetic() {
        let s200 = SmoothingFactor::new(200).unwrap();
        let mut words = vec!["sofa"; 5];
        words.extend(vec!["couch"; 85]);
        assert_eq!(h1_probability(&set(&words), "sofa", s200), 6.0 / 290.0);
        assert_eq!(h1_probability(&set(&["x"; 40]), "sofa", s200), 1.0 / 240.0);
        assert_eq!(h1_probability(&set(&["sofa"; 90]), "sofa", s200), 91.0 / 290.0);
        assert_eq!(set(&["Sofa", "sofa"]).count("SOFA"), 2);
    }

    #[test]
    fn seeds_differ_per_index() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn dump_round_trip() {
        let mut a = set(&["car", "carpet"]);
        a.context = Some(ContextId::new("i", "s", 2));
        a.seed = 11;
        let mut buf = Vec::new();
        write_sample_sets(std::slice::from_ref(&a), &mut buf).unwrap();
        assert_eq!(read_sample_sets(buf.as_slice()).unwrap(), vec![a]);
    }
}
