use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatClient, ChatExchange, GatewayError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEntry {
    pub match_substring: String,
    pub response: String,
}

/// Scripted client. A prompt is answered by the first unconsumed entry whose
/// `match_substring` occurs in it, consuming that entry. Once every matching
/// entry is consumed the last matching one keeps answering, so a script can
/// end with a standing reply.
#[derive(Debug)]
pub struct MockChatClient {
    entries: Vec<MockEntry>,
    consumed: Mutex<Vec<bool>>,
    calls: Mutex<Vec<String>>,
}

impl MockChatClient {
    pub fn new(entries: Vec<MockEntry>) -> Self {
        let n = entries.len();
        MockChatClient { entries, consumed: Mutex::new(vec![false; n]), calls: Mutex::new(Vec::new()) }
    }

    pub fn from_pairs<S: Into<String>, R: Into<String>>(pairs: impl IntoIterator<Item = (S, R)>) -> Self {
        MockChatClient::new(
            pairs.into_iter().map(|(m, r)| MockEntry { match_substring: m.into(), response: r.into() }).collect(),
        )
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        serde_json::from_str(text).map(MockChatClient::new).map_err(|e| GatewayError::Config(format!("mock script: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("cannot read mock script {}: {e}", path.display())))?;
        MockChatClient::from_json(&text)
    }

    /// Prompts received so far, in order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }

    /// A fresh client with the same script and no consumption.
    pub fn reset(&self) -> Self {
        MockChatClient::new(self.entries.clone())
    }
}

impl ChatClient for MockChatClient {
    fn complete(&self, prompt: &str, _temperature: f64) -> Result<ChatExchange, GatewayError> {
        self.calls.lock().unwrap().push(prompt.to_string());
        let mut consumed = self.consumed.lock().unwrap();
        let matching: Vec<usize> =
            (0..self.entries.len()).filter(|&i| prompt.contains(&self.entries[i].match_substring)).collect();
        let chosen = match matching.iter().find(|&&i| !consumed[i]) {
            Some(&i) => {
                consumed[i] = true;
                i
            }
            None => *matching.last().ok_or(GatewayError::NoScriptMatch)?,
        };
        Ok(ChatExchange::success(prompt, self.entries[chosen].response.clone(), "mock"))
    }
}
