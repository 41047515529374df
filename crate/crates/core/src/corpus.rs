//! Article ingestion and rule-based sentence segmentation.
//!
//! Sentences carry character offsets (Unicode scalar values) into the
//! flattened article text, so `text == source[start..end]` holds for every
//! sentence and the gaps between sentences are whitespace only.

use std::fs;
use std::path::Path;

use quick_xml::events::Event;
use quick_xml::Reader;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::char_slice;

/// Abbreviations that never end a sentence. Matched case-insensitively
/// against the word immediately preceding a period.
const ABBREVIATIONS: &[&str] = &[
    "al", "approx", "ca", "cf", "co", "dr", "e.g", "eg", "eq", "eqs", "fig", "figs", "i.e", "ie",
    "inc", "jr", "ltd", "mr", "mrs", "ms", "no", "nos", "prof", "ref", "refs", "resp", "sr", "st",
    "tab", "vol", "vs",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}', '\u{00bb}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '{', '\u{201c}', '\u{2018}', '\u{00ab}'];

/// Elements whose content is dropped from the sentence stream.
const DROPPED_ELEMENTS: &[&[u8]] = &[
    b"table-wrap",
    b"table",
    b"fig",
    b"fig-group",
    b"graphic",
    b"media",
    b"disp-formula",
    b"supplementary-material",
];
const SKIPPED_ELEMENTS: &[&[u8]] = &[b"ref-list", b"back", b"title", b"label", b"caption"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub pubmed_id: String,
    pub title: String,
    pub sentences: Vec<Sentence>,
    /// Flattened body text the sentence offsets point into.
    pub text: String,
}

impl Article {
    /// Rebuild the body text from sentences and the recorded gaps.
    pub fn reconstruct(&self) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut pos = 0;
        for s in &self.sentences {
            out.push_str(char_slice(&self.text, pos, s.start));
            out.push_str(&s.text);
            pos = s.end;
        }
        out.push_str(char_slice(&self.text, pos, usize::MAX));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArticleFormat {
    PlainText,
    ArticleXml,
}

impl ArticleFormat {
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "txt" | "text" => Some(ArticleFormat::PlainText),
            "xml" | "nxml" => Some(ArticleFormat::ArticleXml),
            _ => None,
        }
    }
}

/// Result of ingesting one document.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub article: Article,
    /// Tables, figures and similar elements removed from the body.
    pub dropped_elements: usize,
}

/// Split `text` into sentences.
///
/// A period, question mark or exclamation mark (plus any closing quotes or
/// brackets) ends a sentence when it is followed by whitespace and the next
/// visible character is uppercase, a digit or an opening quote/bracket, and
/// the word before a period is not a known abbreviation. A blank line always
/// ends a sentence.
pub fn segment_sentences(text: &str) -> Vec<Sentence> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut spans = Vec::new();
    let mut i = 0;

    while i < n {
        while i < n && chars[i].is_whitespace() {
            i += 1;
        }
        if i >= n {
            break;
        }
        let start = i;
        let mut end = None;
        let mut j = i;
        while j < n {
            let c = chars[j];
            if c == '\n' && is_blank_line_break(&chars, j) {
                end = Some(trim_end(&chars, start, j));
                break;
            }
            if matches!(c, '.' | '!' | '?') {
                let mut k = j + 1;
                while k < n && matches!(chars[k], '.' | '!' | '?') {
                    k += 1;
                }
                while k < n && CLOSERS.contains(&chars[k]) {
                    k += 1;
                }
                if k >= n {
                    end = Some(k);
                    break;
                }
                if chars[k].is_whitespace()
                    && next_starts_sentence(&chars, k)
                    && !(c == '.' && k == j + 1 && is_abbreviation(&chars, start, j))
                {
                    end = Some(k);
                    break;
                }
                j = k;
                continue;
            }
            j += 1;
        }
        let end = end.unwrap_or_else(|| trim_end(&chars, start, n));
        spans.push((start, end));
        i = end;
    }

    spans
        .into_iter()
        .enumerate()
        .map(|(index, (start, end))| Sentence {
            index,
            start,
            end,
            text: chars[start..end].iter().collect(),
        })
        .collect()
}

fn trim_end(chars: &[char], start: usize, mut end: usize) -> usize {
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    end
}

fn is_blank_line_break(chars: &[char], newline: usize) -> bool {
    let mut k = newline + 1;
    while k < chars.len() && chars[k].is_whitespace() {
        if chars[k] == '\n' {
            return true;
        }
        k += 1;
    }
    false
}

fn next_starts_sentence(chars: &[char], from: usize) -> bool {
    let next = chars[from..].iter().find(|c| !c.is_whitespace());
    match next {
        None => true,
        Some(c) => c.is_uppercase() || c.is_numeric() || OPENERS.contains(c),
    }
}

/// Whether the word ending right before `period` is a listed abbreviation.
fn is_abbreviation(chars: &[char], sentence_start: usize, period: usize) -> bool {
    let mut k = period;
    while k > sentence_start && !chars[k - 1].is_whitespace() && !OPENERS.contains(&chars[k - 1]) {
        k -= 1;
    }
    let word: String = chars[k..period].iter().flat_map(|c| c.to_lowercase()).collect();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Parse a document into an [`Article`].
pub fn ingest_article(pubmed_id: &str, raw: &[u8], format: ArticleFormat) -> Result<Ingested> {
    let decoded = std::str::from_utf8(raw).map_err(|e| Error::InvalidUtf8 {
        offset: e.valid_up_to(),
    })?;
    let (title, body, dropped_elements) = match format {
        ArticleFormat::PlainText => {
            let (title, body) = split_plain_title(decoded);
            (title, body, 0)
        }
        ArticleFormat::ArticleXml => flatten_xml(decoded)?,
    };
    if body.trim().is_empty() {
        return Err(Error::EmptyDocument);
    }
    if dropped_elements > 0 {
        log::info!("{pubmed_id}: dropped {dropped_elements} table/figure elements");
    }
    let sentences = segment_sentences(&body);
    Ok(Ingested {
        article: Article {
            pubmed_id: pubmed_id.to_string(),
            title,
            sentences,
            text: body,
        },
        dropped_elements,
    })
}

/// Plain text files may start with a `Title:` line; everything else is body.
fn split_plain_title(text: &str) -> (String, String) {
    let stripped = text.strip_prefix('\u{feff}').unwrap_or(text);
    if let Some(rest) = stripped.strip_prefix("Title:") {
        let (line, body) = rest.split_once('\n').unwrap_or((rest, ""));
        return (line.trim().to_string(), body.to_string());
    }
    (String::new(), stripped.to_string())
}

/// Flatten a JATS-style article: paragraphs under `<body>` become blank-line
/// separated blocks; tables, figures, section titles and references are left
/// out.
fn flatten_xml(xml: &str) -> Result<(String, String, usize)> {
    let mut reader = Reader::from_str(xml);
    let mut title = String::new();
    let mut paragraphs: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut stack: Vec<Vec<u8>> = Vec::new();
    let mut in_body = 0usize;
    let mut in_title = 0usize;
    let mut dropped_depth = 0usize;
    let mut skipped_depth = 0usize;
    let mut paragraph_depth = 0usize;
    let mut dropped = 0usize;
    let mut saw_body = false;

    loop {
        let position = reader.buffer_position();
        let event = reader.read_event().map_err(|e| Error::XmlParse {
            offset: reader.error_position().max(position),
            message: e.to_string(),
        })?;
        match event {
            Event::Start(e) => {
                let name = e.local_name().as_ref().to_vec();
                if name == b"body" {
                    in_body += 1;
                    saw_body = true;
                } else if name == b"article-title" && in_body == 0 && title.is_empty() {
                    in_title += 1;
                } else if in_body > 0 && DROPPED_ELEMENTS.contains(&name.as_slice()) {
                    if dropped_depth == 0 {
                        dropped += 1;
                    }
                    dropped_depth += 1;
                } else if in_body > 0 && SKIPPED_ELEMENTS.contains(&name.as_slice()) {
                    skipped_depth += 1;
                } else if in_body > 0 && name == b"p" && dropped_depth == 0 && skipped_depth == 0 {
                    if paragraph_depth == 0 {
                        current.clear();
                    }
                    paragraph_depth += 1;
                }
                stack.push(name);
            }
            Event::End(e) => {
                let name = e.local_name().as_ref().to_vec();
                match stack.pop() {
                    Some(open) if open == name => {}
                    Some(open) => {
                        return Err(Error::XmlParse {
                            offset: position,
                            message: format!(
                                "closing tag </{}> does not match <{}>",
                                String::from_utf8_lossy(&name),
                                String::from_utf8_lossy(&open)
                            ),
                        })
                    }
                    None => {
                        return Err(Error::XmlParse {
                            offset: position,
                            message: format!(
                                "unexpected closing tag </{}>",
                                String::from_utf8_lossy(&name)
                            ),
                        })
                    }
                }
                if name == b"body" {
                    in_body -= 1;
                } else if name == b"article-title" && in_title > 0 {
                    in_title -= 1;
                } else if in_body > 0 && DROPPED_ELEMENTS.contains(&name.as_slice()) {
                    dropped_depth -= 1;
                } else if in_body > 0 && SKIPPED_ELEMENTS.contains(&name.as_slice()) {
                    skipped_depth -= 1;
                } else if in_body > 0 && name == b"p" && paragraph_depth > 0 {
                    paragraph_depth -= 1;
                    if paragraph_depth == 0 {
                        let para = crate::text::normalize_whitespace(&current);
                        if !para.is_empty() {
                            paragraphs.push(para);
                        }
                    }
                }
            }
            Event::Empty(e) => {
                let name = e.local_name();
                if in_body > 0 && dropped_depth == 0 && DROPPED_ELEMENTS.contains(&name.as_ref()) {
                    dropped += 1;
                }
            }
            Event::Text(t) => {
                let text = t.xml_content().map_err(|e| Error::XmlParse {
                    offset: position,
                    message: e.to_string(),
                })?;
                append_text(
                    &text,
                    in_title,
                    &mut title,
                    paragraph_depth,
                    dropped_depth + skipped_depth,
                    &mut current,
                );
            }
            Event::CData(t) => {
                let text = String::from_utf8_lossy(&t).into_owned();
                append_text(
                    &text,
                    in_title,
                    &mut title,
                    paragraph_depth,
                    dropped_depth + skipped_depth,
                    &mut current,
                );
            }
            Event::GeneralRef(r) => {
                let resolved = resolve_entity(&r)
                    .ok_or_else(|| Error::XmlParse {
                        offset: position,
                        message: format!("unknown entity &{};", String::from_utf8_lossy(&r)),
                    })?;
                append_text(
                    &resolved,
                    in_title,
                    &mut title,
                    paragraph_depth,
                    dropped_depth + skipped_depth,
                    &mut current,
                );
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if let Some(open) = stack.last() {
        return Err(Error::XmlParse {
            offset: xml.len() as u64,
            message: format!("unclosed element <{}>", String::from_utf8_lossy(open)),
        });
    }
    if !saw_body {
        return Err(Error::EmptyDocument);
    }
    Ok((
        crate::text::normalize_whitespace(&title),
        paragraphs.join("\n\n"),
        dropped,
    ))
}

fn append_text(
    text: &str,
    in_title: usize,
    title: &mut String,
    paragraph_depth: usize,
    hidden_depth: usize,
    current: &mut String,
) {
    if in_title > 0 {
        title.push_str(text);
    } else if paragraph_depth > 0 && hidden_depth == 0 {
        current.push_str(text);
    }
}

fn resolve_entity(name: &[u8]) -> Option<String> {
    let name = std::str::from_utf8(name).ok()?;
    let resolved = match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => '\u{a0}',
        _ => {
            let code = if let Some(hex) = name.strip_prefix("#x").or_else(|| name.strip_prefix("#X")) {
                u32::from_str_radix(hex, 16).ok()?
            } else {
                name.strip_prefix('#')?.parse().ok()?
            };
            char::from_u32(code)?
        }
    };
    Some(resolved.to_string())
}

/// Statistics from ingesting a directory.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestStats {
    pub articles: usize,
    pub sentences: usize,
    pub dropped_elements: usize,
    pub skipped_files: Vec<String>,
}

/// Ingest every `<pubmed_id>.<ext>` file in `dir`. Articles come back sorted
/// by PubMed id regardless of worker scheduling.
pub fn ingest_dir(dir: &Path) -> Result<(Vec<Article>, IngestStats)> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut stats = IngestStats::default();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let format = path
            .extension()
            .and_then(|e| e.to_str())
            .and_then(ArticleFormat::from_extension);
        let stem = path.file_stem().and_then(|s| s.to_str()).map(str::to_string);
        match (format, stem) {
            (Some(format), Some(stem)) => files.push((stem, path, format)),
            _ => stats.skipped_files.push(path.display().to_string()),
        }
    }
    files.sort();

    let ingested: Vec<Ingested> = files
        .par_iter()
        .map(|(id, path, format)| {
            let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
            ingest_article(id, &raw, *format).map_err(|e| match e {
                Error::Io { .. } => e,
                other => Error::schema(path.display().to_string(), other.to_string()),
            })
        })
        .collect::<Result<_>>()?;

    let mut articles = Vec::with_capacity(ingested.len());
    for item in ingested {
        stats.articles += 1;
        stats.sentences += item.article.sentences.len();
        stats.dropped_elements += item.dropped_elements;
        articles.push(item.article);
    }
    Ok((articles, stats))
}
