//! Few-shot risk-of-bias classification against chat-completion endpoints.

pub mod client;
pub mod error;
pub mod prompt;
pub mod runner;
pub mod verdict;

pub use client::{call_endpoint, CallOutcome, EndpointConfig, HttpRequest, HttpResponse, RateLimiter, Transport, TransportError, UreqTransport};
pub use error::LlmError;
pub use prompt::{build_prompt, sample_shots, Message, PromptBundle, SYSTEM_PROMPT};
pub use runner::{predictions, read_log, replay, run, write_log, LlmRunConfig, LogEntry, LogHeader, RunOutput};
pub use verdict::{parse_verdict, Answer, LlmVerdict};
