//! Chat prompts: a fixed system instruction, optional worked examples drawn
//! from the training split, then the instance under evaluation.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robkit_core::annotate::Instance;
use serde::{Deserialize, Serialize};

use crate::error::LlmError;

/// System instruction, reproduced byte for byte (including trailing spaces).
pub const SYSTEM_PROMPT: &str = include_str!("system_prompt.txt");

pub const ALLOWED_SHOTS: [usize; 3] = [0, 1, 3];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    fn new(role: &str, content: String) -> Self {
        Message {
            role: role.to_string(),
            content,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub target_id: String,
    pub shot_ids: Vec<String>,
    pub messages: Vec<Message>,
}

impl PromptBundle {
    pub fn system_text(&self) -> &str {
        &self.messages[0].content
    }
}

pub fn user_turn(inst: &Instance) -> String {
    format!("Question: {}\nContext: {}", inst.question, inst.context)
}

/// Expected reply for a worked example: Low maps to YES with the gold
/// evidence, High/Unclear to NO.
pub fn assistant_turn(inst: &Instance) -> String {
    let answer = if inst.label.is_positive() { "YES" } else { "NO" };
    serde_json::json!({ "answer": answer, "evidence": inst.answer_text }).to_string()
}

/// Sample `shots` training instances with `seed`. The same examples are
/// used for every target in a run.
pub fn sample_shots<'a>(train: &'a [Instance], shots: usize, seed: u64) -> Result<Vec<&'a Instance>, LlmError> {
    if !ALLOWED_SHOTS.contains(&shots) {
        return Err(LlmError::Config(format!("shots must be 0, 1 or 3, got {shots}")));
    }
    if shots > train.len() {
        return Err(LlmError::Config(format!(
            "{shots} shots requested but the training split has {} instances",
            train.len()
        )));
    }
    // sort by id so the draw does not depend on input order
    let mut pool: Vec<&Instance> = train.iter().collect();
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, pool.len(), shots).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pool[i]).collect())
}

pub fn build_prompt(target: &Instance, shots: &[&Instance]) -> PromptBundle {
    let mut messages = vec![Message::new("system", SYSTEM_PROMPT.to_string())];
    for s in shots {
        messages.push(Message::new("user", user_turn(s)));
        messages.push(Message::new("assistant", assistant_turn(s)));
    }
    messages.push(Message::new("user", user_turn(target)));
    PromptBundle {
        target_id: target.id.clone(),
        shot_ids: shots.iter().map(|s| s.id.clone()).collect(),
        messages,
    }
}
