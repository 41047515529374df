//! Word tokenization shared by the sentence index, the n-gram featurizer and
//! the desk-scale models.
//!
//! Tokens are maximal runs of Unicode alphanumeric characters, lowercased.
//! No stemming, no stopword removal. Offsets are in Unicode scalar values.

use serde::{Deserialize, Serialize};

/// Tokenizer options recorded alongside every artifact built from tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    /// Tokens shorter than this many characters are dropped.
    pub min_token_chars: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            min_token_chars: 1,
        }
    }
}

impl TokenizerConfig {
    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        let mut tokens = if self.lowercase {
            tokenize(text)
        } else {
            tokenize_cased(text)
        };
        if self.min_token_chars > 1 {
            tokens.retain(|t| t.end - t.start >= self.min_token_chars);
        }
        tokens
    }

    pub fn words(&self, text: &str) -> Vec<String> {
        self.tokenize(text).into_iter().map(|t| t.text).collect()
    }
}

/// A lowercased word token with its character span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Tokenize `text` into lowercased alphanumeric word tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    scan(text, true)
}

fn tokenize_cased(text: &str) -> Vec<Token> {
    scan(text, false)
}

fn scan(text: &str, lowercase: bool) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut pos = 0;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if current.is_empty() {
                start = pos;
            }
            if lowercase {
                current.extend(ch.to_lowercase());
            } else {
                current.push(ch);
            }
        } else if !current.is_empty() {
            tokens.push(Token {
                text: std::mem::take(&mut current),
                start,
                end: pos,
            });
        }
        pos += 1;
    }
    if !current.is_empty() {
        tokens.push(Token {
            text: current,
            start,
            end: pos,
        });
    }
    tokens
}

/// Tokenize and keep only the token strings.
pub fn words(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

/// Slice `text` by Unicode scalar offsets `[start, end)`.
///
/// Offsets past the end are clamped.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let byte_start = indices.nth(start).unwrap_or(text.len());
    let byte_end = if end > start {
        indices.nth(end - start - 1).unwrap_or(text.len())
    } else {
        byte_start
    };
    &text[byte_start..byte_end]
}

/// Collapse runs of whitespace to single spaces and trim.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_are_lowercased_alphanumeric_runs() {
        let toks = tokenize("Double-blind, PLACEBO 2x.");
        let words: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(words, ["double", "blind", "placebo", "2x"]);
        assert_eq!((toks[1].start, toks[1].end), (7, 12));
    }

    #[test]
    fn offsets_count_chars_not_bytes() {
        let toks = tokenize("naïve café");
        assert_eq!((toks[1].start, toks[1].end), (6, 10));
        assert_eq!(char_slice("naïve café", 6, 10), "café");
    }

    #[test]
    fn char_slice_clamps() {
        assert_eq!(char_slice("abc", 1, 10), "bc");
        assert_eq!(char_slice("abc", 5, 7), "");
        assert_eq!(char_slice("abc", 2, 2), "");
    }
}
