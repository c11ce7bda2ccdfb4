use std::collections::{BTreeMap, HashMap};

use unicode_general_category::{get_general_category, GeneralCategory};

use crate::corpus::{ContextId, ContextScope, StimulusCorpus};
use crate::error::{Error, Result};

pub const END_OF_TEXT: &str = "<|endoftext|>";

/// Byte-level BPE vocabularies encode a leading space as `Ġ` and a newline as `Ċ`.
const SPACE_MARKERS: [char; 2] = ['Ġ', 'Ċ'];

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Whether `token` starts a new word: it begins with whitespace (or a
/// whitespace marker), consists only of punctuation, or ends the text.
pub fn is_word_end(token: &str) -> bool {
    match token.chars().next() {
        None => false,
        Some(c) if c.is_whitespace() || SPACE_MARKERS.contains(&c) => true,
        Some(_) => token == END_OF_TEXT || token.chars().all(is_punctuation),
    }
}

/// Removes a leading whitespace marker from a token surface form.
pub fn strip_marker(token: &str) -> &str {
    let mut chars = token.chars();
    match chars.next() {
        Some(c) if c.is_whitespace() || SPACE_MARKERS.contains(&c) => chars.as_str(),
        _ => token,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    boundary: Vec<bool>,
    max_chars: usize,
}

impl TokenVocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Integrity(format!("empty token at index {i}")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Integrity(format!("duplicate token {t:?}")));
            }
        }
        let boundary = tokens.iter().map(|t| is_word_end(t)).collect();
        let max_chars = tokens.iter().map(|t| t.chars().count()).max().unwrap_or(0);
        Ok(Self {
            tokens,
            index,
            boundary,
            max_chars,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Boundary-marking tokens, including the end-of-text token.
    pub fn is_boundary(&self, id: u32) -> bool {
        self.boundary.get(id as usize).copied().unwrap_or(false)
    }

    pub fn end_of_text(&self) -> Option<u32> {
        self.id(END_OF_TEXT)
    }

    /// The marker prepended to word-initial tokens in this vocabulary.
    fn space_marker(&self) -> char {
        if self.tokens.iter().any(|t| t.starts_with(' ')) {
            ' '
        } else if self.tokens.iter().any(|t| t.starts_with('Ġ')) {
            'Ġ'
        } else {
            ' '
        }
    }
}

/// Maps words to token sequences using the shipped segmentation table,
/// falling back to greedy longest-match over the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    vocab: TokenVocab,
    segmentation: BTreeMap<String, Vec<u32>>,
}

impl Tokenizer {
    pub fn new(vocab: TokenVocab, segmentation: BTreeMap<String, Vec<u32>>) -> Result<Self> {
        for (word, ids) in &segmentation {
            if ids.is_empty() {
                return Err(Error::Integrity(format!("empty segmentation for {word:?}")));
            }
            if let Some(bad) = ids.iter().find(|&&i| i as usize >= vocab.len()) {
                return Err(Error::Integrity(format!(
                    "segmentation of {word:?} uses token {bad} outside a {}-token vocabulary",
                    vocab.len()
                )));
            }
        }
        Ok(Self { vocab, segmentation })
    }

    pub fn from_tokens(tokens: &[&str]) -> Result<Self> {
        Self::new(
            TokenVocab::new(tokens.iter().map(|s| s.to_string()).collect())?,
            BTreeMap::new(),
        )
    }

    pub fn vocab(&self) -> &TokenVocab {
        &self.vocab
    }

    pub fn segmentation(&self) -> &BTreeMap<String, Vec<u32>> {
        &self.segmentation
    }

    pub fn tokenize(&self, word: &str) -> Result<Vec<u32>> {
        if let Some(ids) = self.segmentation.get(word) {
            return Ok(ids.clone());
        }
        if word.is_empty() {
            return Err(Error::Tokenization(word.to_string()));
        }
        let text: Vec<char> = std::iter::once(self.vocab.space_marker())
            .chain(word.chars())
            .collect();
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            let longest = (1..=self.vocab.max_chars.min(text.len() - pos))
                .rev()
                .find_map(|len| {
                    let piece: String = text[pos..pos + len].iter().collect();
                    self.vocab.id(&piece).map(|id| (id, len))
                });
            match longest {
                Some((id, len)) => {
                    out.push(id);
                    pos += len;
                }
                None => return Err(Error::Tokenization(word.to_string())),
            }
        }
        Ok(out)
    }

    /// Concatenates token surfaces and drops the leading whitespace marker.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        let joined: String = ids
            .iter()
            .filter_map(|&i| self.vocab.token(i))
            .collect::<Vec<_>>()
            .concat();
        strip_marker(&joined).replace(SPACE_MARKERS[0], " ")
    }

    /// Token prefix conditioning the word at `id`: end-of-text (when the
    /// vocabulary has one) followed by the tokens of the preceding words.
    pub fn context_prefix(&self, corpus: &StimulusCorpus, id: &ContextId, scope: ContextScope) -> Result<Vec<u32>> {
        let words = corpus
            .preceding_words(id, scope)
            .ok_or_else(|| Error::Reference(format!("unknown context {id}")))?;
        let mut prefix: Vec<u32> = self.vocab.end_of_text().into_iter().collect();
        for w in words {
            prefix.extend(self.tokenize(&w.text)?);
        }
        Ok(prefix)
    }
}
