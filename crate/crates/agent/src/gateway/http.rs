use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{ChatClient, ChatExchange, GatewayError, TransportStatus};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Io(String),
}

/// One HTTP POST of a JSON body. Split out so the retry logic can be tested
/// without a network.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder().build().map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let mut req = self
            .client
            .post(url)
            .timeout(timeout)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string());
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| if e.is_timeout() { TransportError::Timeout } else { TransportError::Io(e.to_string()) })?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| if e.is_timeout() { TransportError::Timeout } else { TransportError::Io(e.to_string()) })?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubled for each later one.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

/// Client for OpenAI-compatible chat-completion endpoints.
pub struct HttpChatClient<T = ReqwestTransport> {
    transport: T,
    url: String,
    api_key: Option<String>,
    model: String,
    timeout: Duration,
    retry: RetryPolicy,
}

impl HttpChatClient<ReqwestTransport> {
    pub fn new(endpoint: &str, api_key: Option<String>, model: &str) -> Result<Self, GatewayError> {
        Ok(HttpChatClient::with_transport(ReqwestTransport::new()?, endpoint, api_key, model))
    }
}

impl<T: Transport> HttpChatClient<T> {
    /// `endpoint` is either the full `/chat/completions` URL or the API base.
    pub fn with_transport(transport: T, endpoint: &str, api_key: Option<String>, model: &str) -> Self {
        let endpoint = endpoint.trim_end_matches('/');
        let url = if endpoint.ends_with("/chat/completions") {
            endpoint.to_string()
        } else {
            format!("{endpoint}/chat/completions")
        };
        HttpChatClient {
            transport,
            url,
            api_key,
            model: model.to_string(),
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn parse_body(&self, prompt: &str, body: &str, attempts: u32, latency: Duration) -> Result<ChatExchange, GatewayError> {
        let bad = |why: &str| GatewayError::Transport { status: 200, body: format!("{why}: {body}") };
        let v: Value = serde_json::from_str(body).map_err(|_| bad("response is not JSON"))?;
        let message = &v["choices"][0]["message"];
        // A refusal is a model answer, not a transport fault: it is returned
        // as the response text and never retried.
        let text = message["content"]
            .as_str()
            .or_else(|| message["refusal"].as_str())
            .ok_or_else(|| bad("response has no choices[0].message.content"))?;
        Ok(ChatExchange {
            prompt: prompt.to_string(),
            response: Some(text.to_string()),
            model: v["model"].as_str().unwrap_or(&self.model).to_string(),
            latency_ms: latency.as_secs_f64() * 1000.0,
            prompt_tokens: v["usage"]["prompt_tokens"].as_u64(),
            completion_tokens: v["usage"]["completion_tokens"].as_u64(),
            status: TransportStatus::Success,
            attempts,
        })
    }
}

impl<T: Transport> ChatClient for HttpChatClient<T> {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<ChatExchange, GatewayError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        })
        .to_string();
        let start = Instant::now();
        let mut last = GatewayError::Timeout;
        for attempt in 1..=self.retry.attempts.max(1) {
            if attempt > 1 {
                thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 2));
            }
            match self.transport.post_json(&self.url, self.api_key.as_deref(), &body, self.timeout) {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    return self.parse_body(prompt, &resp.body, attempt, start.elapsed());
                }
                Ok(resp) if resp.status == 401 || resp.status == 403 => {
                    return Err(GatewayError::AuthFailure(resp.status));
                }
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    last = GatewayError::Transport { status: resp.status, body: resp.body };
                }
                Ok(resp) => return Err(GatewayError::Transport { status: resp.status, body: resp.body }),
                Err(TransportError::Timeout) => last = GatewayError::Timeout,
                Err(TransportError::Io(msg)) => last = GatewayError::Transport { status: 0, body: msg },
            }
        }
        Err(last)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Mutex;

    use super::*;

    struct Scripted(Mutex<Vec<Result<HttpResponse, TransportError>>>, Mutex<u32>);

    impl Transport for Scripted {
        fn post_json(&self, _: &str, _: Option<&str>, _: &str, _: Duration) -> Result<HttpResponse, TransportError> {
            *self.1.lock().unwrap() += 1;
            self.0.lock().unwrap().remove(0)
        }
    }

    fn ok(text: &str) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse {
            status: 200,
            body: json!({"choices": [{"message": {"content": text}}], "usage": {"prompt_tokens": 3, "completion_tokens": 1}})
                .to_string(),
        })
    }

    fn status(code: u16) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse { status: code, body: "err".into() })
    }

    fn client(script: Vec<Result<HttpResponse, TransportError>>) -> HttpChatClient<Scripted> {
        HttpChatClient::with_transport(Scripted(Mutex::new(script), Mutex::new(0)), "http://x/v1", None, "m")
            .retry(RetryPolicy { attempts: 3, base_delay: Duration::ZERO })
    }

    #[test]
    fn retries_server_errors() {
        let c = client(vec![status(500), status(500), ok("hi")]);
        let ex = c.complete("p", 0.0).unwrap();
        assert_eq!((ex.response.as_deref(), ex.attempts, ex.prompt_tokens), (Some("hi"), 3, Some(3)));
        assert_eq!(c.url, "http://x/v1/chat/completions");
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let c = client(vec![status(503), Err(TransportError::Timeout), status(429)]);
        assert!(matches!(c.complete("p", 0.0), Err(GatewayError::Transport { status: 429, .. })));
        assert_eq!(*c.transport.1.lock().unwrap(), 3);
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let c = client(vec![status(401), ok("never")]);
        assert_eq!(c.complete("p", 0.0), Err(GatewayError::AuthFailure(401)));
        assert_eq!(*c.transport.1.lock().unwrap(), 1);
    }

    #[test]
    fn refusal_is_returned_as_text() {
        let body = json!({"choices": [{"message": {"content": null, "refusal": "no"}}]}).to_string();
        let c = client(vec![Ok(HttpResponse { status: 200, body })]);
        assert_eq!(c.complete("p", 0.0).unwrap().response.as_deref(), Some("no"));
    }
}
