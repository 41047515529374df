//! Evaluation runs over a test split with a bounded worker pool, an audit
//! log of every request and response, and replay from that log.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use robkit_core::annotate::Instance;
use robkit_core::eval::Prediction;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::client::{call_endpoint, request_body, EndpointConfig, RateLimiter, Transport};
use crate::error::LlmError;
use crate::prompt::{build_prompt, sample_shots};
use crate::verdict::{parse_verdict, Answer, LlmVerdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRunConfig {
    pub endpoint: EndpointConfig,
    pub shots: usize,
    pub seed: u64,
}

impl LlmRunConfig {
    pub fn model_name(&self) -> String {
        format!("llm-{}shot", self.shots)
    }
}

/// First line of `llm_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub kind: String,
    pub url: String,
    pub model: String,
    pub temperature: f64,
    pub shots: usize,
    pub seed: u64,
    pub shot_ids: Vec<String>,
    pub instances: usize,
    #[serde(default)]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub id: String,
    pub request: Value,
    pub response: Option<String>,
    pub content: Option<String>,
    pub verdict: LlmVerdict,
    pub attempts: u32,
    pub error: Option<String>,
}

impl LogEntry {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub header: LogHeader,
    pub entries: Vec<LogEntry>,
}

impl RunOutput {
    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.failed()).count()
    }
}

/// Query the endpoint for every test instance. Failed calls are recorded
/// and scored as NO; the run continues. Entries are sorted by id.
pub fn run(test: &[Instance], train: &[Instance], cfg: &LlmRunConfig, transport: &dyn Transport) -> Result<RunOutput, LlmError> {
    let shots = sample_shots(train, cfg.shots, cfg.seed)?;
    let workers = cfg.endpoint.concurrency.max(1);
    let api_key = cfg.endpoint.api_key();
    let limiter = RateLimiter::new(Duration::from_millis(cfg.endpoint.min_interval_ms));
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(test.len()));

    std::thread::scope(|scope| {
        for _ in 0..workers.min(test.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(inst) = test.get(i) else { break };
                let bundle = build_prompt(inst, &shots);
                let outcome = call_endpoint(&bundle, &cfg.endpoint, api_key.as_deref(), transport, &limiter);
                let verdict = match &outcome.content {
                    Some(c) if outcome.ok() => parse_verdict(c),
                    _ => parse_verdict(""),
                };
                let entry = LogEntry {
                    id: inst.id.clone(),
                    request: request_body(&bundle, &cfg.endpoint),
                    response: outcome.body,
                    content: outcome.content,
                    verdict,
                    attempts: outcome.attempts,
                    error: outcome.error,
                };
                results.lock().expect("results lock").push(entry);
            });
        }
    });

    let mut entries = results.into_inner().expect("results lock");
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(RunOutput {
        header: LogHeader {
            kind: "header".into(),
            url: cfg.endpoint.url.clone(),
            model: cfg.endpoint.model.clone(),
            temperature: cfg.endpoint.temperature,
            shots: cfg.shots,
            seed: cfg.seed,
            shot_ids: shots.iter().map(|s| s.id.clone()).collect(),
            instances: test.len(),
            config_hash: None,
        },
        entries,
    })
}

pub fn write_log(path: &Path, out: &RunOutput) -> Result<(), LlmError> {
    let io = |e| LlmError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    serde_json::to_writer(&mut w, &out.header)?;
    w.write_all(b"\n").map_err(io)?;
    for e in &out.entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_log(path: &Path) -> Result<RunOutput, LlmError> {
    let file = File::open(path).map_err(|e| LlmError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let parse_err = |line: usize, e: &dyn std::fmt::Display| LlmError::Log {
        line,
        message: e.to_string(),
    };
    let (_, first) = lines.next().ok_or(LlmError::Log {
        line: 1,
        message: "empty log".into(),
    })?;
    let first = first.map_err(|e| parse_err(1, &e))?;
    let header: LogHeader = serde_json::from_str(&first).map_err(|e| parse_err(1, &e))?;
    let mut entries = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| parse_err(i + 1, &e))?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line).map_err(|e| parse_err(i + 1, &e))?);
    }
    Ok(RunOutput { header, entries })
}

/// Re-derive verdicts from the logged response text.
pub fn replay(out: &RunOutput) -> Vec<(String, LlmVerdict)> {
    out.entries
        .iter()
        .map(|e| {
            let v = match (&e.content, &e.error) {
                (Some(c), None) => parse_verdict(c),
                _ => parse_verdict(""),
            };
            (e.id.clone(), v)
        })
        .collect()
}

/// Predictions for the eval module: score 1 for YES and 0 for NO, with the
/// evidence string as the answer.
pub fn predictions(verdicts: &[(String, LlmVerdict)], model: &str, run: u64) -> Vec<Prediction> {
    verdicts
        .iter()
        .map(|(id, v)| Prediction {
            id: id.clone(),
            model: model.to_string(),
            run,
            score: if v.answer == Answer::Yes { 1.0 } else { 0.0 },
            label: v.answer.label(),
            answer: Some(v.evidence.clone()),
        })
        .collect()
}
