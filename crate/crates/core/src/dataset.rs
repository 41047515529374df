//! JSON Lines I/O and an adapter reading externally published instance
//! files into [`Instance`]s.
//!
//! The adapter accepts JSON Lines, a JSON array, or an object with a `data`
//! array. Field names are matched against a list of aliases, answers may be
//! flat (`answer_text` + `answer_start`) or SQuAD-style
//! (`answers: {text: [..], answer_start: [..]}`), and labels may be strings
//! (`low`, `yes`, `high`, `unclear`, `no`, ...) or integers (1 = low).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::annotate::{Instance, Label, Provenance};
use crate::error::{Error, Result};
use crate::reviews::{BiasType, DomainRules};
use crate::text::char_slice;

/// Environment variable naming a directory with the published data.
pub const PUBLISHED_DIR_ENV: &str = "ROBKIT_PUBLISHED_DIR";

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::schema(format!("{}:{}", path.display(), i + 1), e.to_string()))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Canonical `instances.jsonl` reader.
pub fn read_instances(path: &Path) -> Result<Vec<Instance>> {
    read_jsonl(path)
}

const ID: &[&str] = &["id", "qid", "uid", "instance_id"];
const BIAS: &[&str] = &["bias_type", "bias", "domain", "rob_type", "type", "category"];
const QUESTION: &[&str] = &["question", "query", "signaling_question"];
const CONTEXT: &[&str] = &["context", "passage", "text"];
const ANSWER: &[&str] = &["answer_text", "answer", "evidence", "supporting_sentence"];
const ANSWER_START: &[&str] = &["answer_start", "start", "answer_offset"];
const LABEL: &[&str] = &["label", "judgement", "judgment", "rob", "class", "rob_label"];
const PUBMED: &[&str] = &["pubmed_id", "pmid", "pubmed"];

fn field<'a>(obj: &'a serde_json::Map<String, Value>, names: &[&str]) -> Option<&'a Value> {
    names.iter().find_map(|n| obj.get(*n)).filter(|v| !v.is_null())
}

fn as_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Map a published label to the binary class.
pub fn parse_label(v: &Value) -> Option<Label> {
    match v {
        Value::Bool(b) => Some(Label::from_positive(*b)),
        Value::Number(n) => match n.as_i64()? {
            1 => Some(Label::Low),
            0 => Some(Label::HighUnclear),
            _ => None,
        },
        Value::String(s) => {
            let s = s.trim().to_lowercase();
            match s.as_str() {
                "low" | "low risk" | "yes" | "1" => Some(Label::Low),
                "high" | "unclear" | "high/unclear" | "high-unclear" | "high risk" | "unclear risk" | "no"
                | "not informed" | "no/not informed" | "0" => Some(Label::HighUnclear),
                _ => None,
            }
        }
        _ => None,
    }
}

fn parse_bias(v: &Value, rules: &DomainRules) -> Option<BiasType> {
    let s = as_text(v)?;
    s.parse().ok().or_else(|| Some(rules.map(&s)))
}

/// First answer text and start from a flat or SQuAD-style record.
fn answer_of(obj: &serde_json::Map<String, Value>) -> Option<(String, Option<usize>)> {
    if let Some(a) = obj.get("answers") {
        let first = match a {
            Value::Array(items) => items.first().cloned(),
            other => Some(other.clone()),
        }?;
        let pick = |v: Option<&Value>| -> Option<Value> {
            match v? {
                Value::Array(xs) => xs.first().cloned(),
                x => Some(x.clone()),
            }
        };
        let text = pick(first.get("text")).and_then(|v| as_text(&v))?;
        let start = pick(first.get("answer_start")).and_then(|v| v.as_u64()).map(|x| x as usize);
        return Some((text, start));
    }
    let text = field(obj, ANSWER).and_then(as_text)?;
    let start = field(obj, ANSWER_START).and_then(Value::as_u64).map(|x| x as usize);
    Some((text, start))
}

/// Character offset of the first occurrence of `needle` in `haystack`.
fn char_find(haystack: &str, needle: &str) -> Option<usize> {
    haystack.find(needle).map(|b| haystack[..b].chars().count())
}

/// Convert one published record. `fallback_id` is used when the record has
/// no id field.
pub fn adapt_record(v: &Value, fallback_id: &str, rules: &DomainRules) -> std::result::Result<Instance, String> {
    let obj = v.as_object().ok_or("record is not an object")?;
    let question = field(obj, QUESTION).and_then(as_text).ok_or("missing question")?;
    let context = field(obj, CONTEXT).and_then(as_text).ok_or("missing context")?;
    let (answer_text, start) = answer_of(obj).ok_or("missing answer")?;
    let label = field(obj, LABEL).and_then(parse_label).ok_or("missing or unknown label")?;
    let bias_type = field(obj, BIAS)
        .and_then(|b| parse_bias(b, rules))
        .ok_or("missing bias type")?;
    let len = answer_text.chars().count();
    let answer_start = match start {
        Some(s) if char_slice(&context, s, s + len) == answer_text => s,
        _ => char_find(&context, &answer_text).ok_or("answer not found in context")?,
    };
    let id = field(obj, ID).and_then(as_text).unwrap_or_else(|| fallback_id.to_string());
    let text_of = |names: &[&str]| field(obj, names).and_then(as_text).unwrap_or_default();
    Ok(Instance {
        id,
        bias_type,
        question,
        context,
        answer_text,
        answer_start,
        label,
        provenance: Provenance {
            review_id: text_of(&["review_id"]),
            study_id: text_of(&["study_id"]),
            pubmed_id: text_of(PUBMED),
            sentence_index: field(obj, &["sentence_index"]).and_then(Value::as_u64).unwrap_or(0) as usize,
            // published records carry no match score; 0 marks it unknown
            similarity: field(obj, &["similarity"]).and_then(Value::as_f64).unwrap_or(0.0),
        },
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptStats {
    pub records: usize,
    pub loaded: usize,
    pub skipped: BTreeMap<String, usize>,
}

fn records_of(path: &Path) -> Result<Vec<Value>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let trimmed = raw.trim_start();
    let whole: Option<Value> = if trimmed.starts_with('[') || trimmed.starts_with('{') {
        serde_json::from_str(&raw).ok()
    } else {
        None
    };
    match whole {
        Some(Value::Array(items)) => Ok(items),
        Some(Value::Object(mut o)) if o.get("data").is_some_and(Value::is_array) => match o.remove("data") {
            Some(Value::Array(items)) => Ok(items),
            _ => unreachable!("checked above"),
        },
        // a single object that is not a container is one JSON Lines record
        _ => raw
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| Error::schema(format!("{}:{}", path.display(), i + 1), e.to_string()))
            })
            .collect(),
    }
}

/// Read one published file, skipping records that cannot be converted.
pub fn load_published_file(path: &Path, rules: &DomainRules) -> Result<(Vec<Instance>, AdaptStats)> {
    let records = records_of(path)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("published");
    let mut stats = AdaptStats {
        records: records.len(),
        ..Default::default()
    };
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        match adapt_record(r, &format!("{stem}:{i}"), rules) {
            Ok(inst) => out.push(inst),
            Err(reason) => *stats.skipped.entry(reason).or_insert(0) += 1,
        }
    }
    stats.loaded = out.len();
    if !stats.skipped.is_empty() {
        log::warn!("{}: skipped {:?}", path.display(), stats.skipped);
    }
    Ok((out, stats))
}

#[derive(Debug, Clone)]
pub struct PublishedSplits {
    pub train: Vec<Instance>,
    pub test: Vec<Instance>,
    pub train_stats: AdaptStats,
    pub test_stats: AdaptStats,
}

fn find_split(dir: &Path, name: &str) -> Option<PathBuf> {
    ["jsonl", "json"]
        .iter()
        .map(|ext| dir.join(format!("{name}.{ext}")))
        .find(|p| p.is_file())
}

/// Load `train` and `test` files (`.jsonl` or `.json`) from `dir`.
pub fn load_published(dir: &Path) -> Result<PublishedSplits> {
    let rules = DomainRules::default();
    let train_path = find_split(dir, "train")
        .ok_or_else(|| Error::InvalidArgument(format!("no train.jsonl or train.json in {}", dir.display())))?;
    let test_path = find_split(dir, "test")
        .ok_or_else(|| Error::InvalidArgument(format!("no test.jsonl or test.json in {}", dir.display())))?;
    let (train, train_stats) = load_published_file(&train_path, &rules)?;
    let (test, test_stats) = load_published_file(&test_path, &rules)?;
    Ok(PublishedSplits {
        train,
        test,
        train_stats,
        test_stats,
    })
}

/// Directory named by [`PUBLISHED_DIR_ENV`] if it exists.
pub fn published_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(PUBLISHED_DIR_ENV)
        .map(PathBuf::from)
        .filter(|p| p.is_dir())
}
