//! Prompt rendering and chat-completion clients.

mod http;
mod judgment;
mod limiter;
mod mock;
mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpChatClient, HttpResponse, ReqwestTransport, RetryPolicy, Transport, TransportError};
pub use judgment::{parse_judgment, render_judgment, Judgment};
pub use limiter::{RateLimited, RateLimiter};
pub use mock::{MockChatClient, MockEntry};
pub use templates::{
    augment_rule, bindings, render_prompt, Bindings, PromptKind, ERRORS, FIVE_ELEMENT, FORMULATE_ANCHOR, JUDGE_ANCHOR,
    ORIGINAL, OUTPUT, PROBLEM, SOLVER_CODE, SPEC_ANCHOR,
};

pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const AUGMENT_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum GatewayError {
    #[error("template needs a binding for `{{{0}}}`")]
    MissingPlaceholder(String),
    #[error("template has no placeholder `{{{0}}}`")]
    UnexpectedPlaceholder(String),
    #[error("augmentation rules are numbered 1 to 7, got {0}")]
    UnknownRule(u8),
    #[error("transport failure (status {status}): {body}")]
    Transport { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("authentication failed (status {0})")]
    AuthFailure(u16),
    #[error("mock script has no entry matching the prompt")]
    NoScriptMatch,
    #[error("invalid gateway configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportStatus {
    Success,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub prompt: String,
    /// Present iff `status` is `Success`.
    pub response: Option<String>,
    pub model: String,
    pub latency_ms: f64,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub status: TransportStatus,
    pub attempts: u32,
}

impl ChatExchange {
    pub fn success(prompt: &str, response: String, model: &str) -> Self {
        ChatExchange {
            prompt: prompt.to_string(),
            response: Some(response),
            model: model.to_string(),
            latency_ms: 0.0,
            prompt_tokens: None,
            completion_tokens: None,
            status: TransportStatus::Success,
            attempts: 1,
        }
    }
}

/// A chat-completion backend. Implementations must be safe to share across
/// pipeline workers.
pub trait ChatClient: Send + Sync {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<ChatExchange, GatewayError>;
}

impl<C: ChatClient + ?Sized> ChatClient for &C {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<ChatExchange, GatewayError> {
        (**self).complete(prompt, temperature)
    }
}

impl<C: ChatClient + ?Sized> ChatClient for Box<C> {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<ChatExchange, GatewayError> {
        (**self).complete(prompt, temperature)
    }
}

impl<C: ChatClient + ?Sized> ChatClient for std::sync::Arc<C> {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<ChatExchange, GatewayError> {
        (**self).complete(prompt, temperature)
    }
}

/// Adapts a closure `prompt -> response` into a client.
pub struct FnClient<F>(pub F);

impl<F> ChatClient for FnClient<F>
where
    F: Fn(&str) -> Result<String, GatewayError> + Send + Sync,
{
    fn complete(&self, prompt: &str, _temperature: f64) -> Result<ChatExchange, GatewayError> {
        (self.0)(prompt).map(|r| ChatExchange::success(prompt, r, "fn"))
    }
}
