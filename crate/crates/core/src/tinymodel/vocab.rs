//! Closed vocabulary and packed question/context sequences.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{char_slice, TokenizerConfig};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const SEP: u32 = 2;
pub const BOS: u32 = 3;
pub const EOS: u32 = 4;
pub const SPECIALS: [&str; 5] = ["[PAD]", "[UNK]", "[SEP]", "[BOS]", "[EOS]"];
pub const DEFAULT_VOCAB_CAP: usize = 8000;

pub const SEGMENT_QUESTION: u8 = 0;
pub const SEGMENT_CONTEXT: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub tokenizer: TokenizerConfig,
    pub tokens: Vec<String>,
    #[serde(skip)]
    lookup: HashMap<String, u32>,
}

impl Vocab {
    /// Most frequent words of `texts` (ties lexicographic) after the special
    /// tokens, `cap` entries in total.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, cap: usize, tokenizer: TokenizerConfig) -> Result<Self> {
        if cap <= SPECIALS.len() {
            return Err(Error::InvalidArgument(format!(
                "vocabulary cap must exceed {} special tokens",
                SPECIALS.len()
            )));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            for w in tokenizer.words(t) {
                *counts.entry(w).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(cap - SPECIALS.len());
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(w, _)| w))
            .collect();
        Ok(Self::from_tokens(tokens, tokenizer))
    }

    pub fn from_tokens(tokens: Vec<String>, tokenizer: TokenizerConfig) -> Self {
        let lookup = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab {
            tokenizer,
            tokens,
            lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> u32 {
        self.lookup.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map_or("[UNK]", String::as_str)
    }

    pub fn encode_words(&self, text: &str) -> Vec<u32> {
        self.tokenizer.words(text).iter().map(|w| self.id(w)).collect()
    }

    /// Space-joined words, stopping at the first end-of-sequence token and
    /// skipping other special tokens.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i as usize >= SPECIALS.len())
            .map(|&i| self.word(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Question tokens, one separator, then context tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub segments: Vec<u8>,
    /// Position of the separator.
    pub sep: usize,
    /// Character span in the context of each context token, in order.
    pub context_spans: Vec<(usize, usize)>,
    /// Whether tokens were dropped to fit `max_len`.
    pub truncated: bool,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// First sequence position holding a context token.
    pub fn context_start(&self) -> usize {
        self.sep + 1
    }

    pub fn validate(&self, vocab_size: usize, max_len: usize) -> Result<()> {
        if self.ids.len() > max_len {
            return Err(Error::SequenceTooLong {
                len: self.ids.len(),
                max_len,
            });
        }
        if self.ids.len() != self.segments.len() {
            return Err(Error::DimensionMismatch {
                expected: self.ids.len(),
                found: self.segments.len(),
            });
        }
        if let Some(&bad) = self.ids.iter().find(|&&i| i as usize >= vocab_size) {
            return Err(Error::InvalidArgument(format!("token id {bad} outside vocabulary of {vocab_size}")));
        }
        let seps = self.ids.iter().filter(|&&i| i == SEP).count();
        if seps != 1 || self.ids.get(self.sep) != Some(&SEP) {
            return Err(Error::InvalidArgument(format!("expected exactly one separator, found {seps}")));
        }
        Ok(())
    }

    /// Context text covered by sequence positions `s..=e`.
    pub fn context_text<'a>(&self, context: &'a str, s: usize, e: usize) -> &'a str {
        let cs = self.context_start();
        if s < cs || e < s || e - cs >= self.context_spans.len() {
            return "";
        }
        char_slice(context, self.context_spans[s - cs].0, self.context_spans[e - cs].1)
    }

    /// Sequence positions of the first and last context tokens overlapping
    /// the character range `start..end`.
    pub fn gold_span(&self, start: usize, end: usize) -> Option<(usize, usize)> {
        let cs = self.context_start();
        let s = self.context_spans.iter().position(|&(a, b)| b > start && a < end)?;
        let e = self.context_spans.iter().rposition(|&(a, b)| b > start && a < end)?;
        Some((cs + s, cs + e))
    }
}

/// Pack a question and an optional context into one sequence of at most
/// `max_len` tokens. The question keeps at most half of the budget; the
/// context fills the rest.
pub fn pack(vocab: &Vocab, question: &str, context: &str, max_len: usize) -> Result<TokenSequence> {
    if max_len < 3 {
        return Err(Error::InvalidArgument("max_len must be at least 3".into()));
    }
    let mut q = vocab.encode_words(question);
    let ctx = vocab.tokenizer.tokenize(context);
    let mut truncated = false;
    let q_budget = (max_len - 1) / 2;
    if q.len() > q_budget && q.len() + 1 + ctx.len() > max_len {
        q.truncate(q_budget.max(max_len - 1 - ctx.len()));
        truncated = true;
    }
    let room = max_len - 1 - q.len();
    let take = ctx.len().min(room);
    truncated |= take < ctx.len();

    let sep = q.len();
    let mut ids = q;
    ids.push(SEP);
    let mut segments = vec![SEGMENT_QUESTION; ids.len()];
    let mut context_spans = Vec::with_capacity(take);
    for t in &ctx[..take] {
        ids.push(vocab.id(&t.text));
        segments.push(SEGMENT_CONTEXT);
        context_spans.push((t.start, t.end));
    }
    Ok(TokenSequence {
        ids,
        segments,
        sep,
        context_spans,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::build(["alpha beta beta gamma"], 100, TokenizerConfig::default()).unwrap()
    }

    #[test]
    fn specials_first_then_by_frequency() {
        let v = vocab();
        assert_eq!(&v.tokens[..5], SPECIALS);
        assert_eq!(&v.tokens[5..], ["beta", "alpha", "gamma"]);
        assert_eq!(v.id("delta"), UNK);
        assert_eq!(v.decode(&[5, 6, EOS, 7]), "beta alpha");
    }

    #[test]
    fn pack_places_one_separator() {
        let v = vocab();
        let seq = pack(&v, "Alpha?", "beta, gamma delta", 16).unwrap();
        assert_eq!(seq.ids, [6, SEP, 5, 7, UNK]);
        assert_eq!(seq.segments, [0, 0, 1, 1, 1]);
        seq.validate(v.len(), 16).unwrap();
        assert_eq!(seq.gold_span(6, 11), Some((3, 3)));
        assert_eq!(seq.context_text("beta, gamma delta", 2, 3), "beta, gamma");
    }

    #[test]
    fn pack_truncates_context() {
        let v = vocab();
        let seq = pack(&v, "alpha", "beta gamma beta gamma", 4).unwrap();
        assert_eq!(seq.len(), 4);
        assert!(seq.truncated);
        assert!(seq.validate(v.len(), 3).is_err());
    }
}
