use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use super::{ChatClient, ChatExchange, GatewayError};

/// Caps concurrent requests and requests per rolling minute. Callers over
/// either limit block until a slot frees up.
#[derive(Debug)]
pub struct RateLimiter {
    max_concurrent: usize,
    per_minute: Option<usize>,
    state: Mutex<(usize, VecDeque<Instant>)>,
    freed: Condvar,
}

impl RateLimiter {
    pub fn new(max_concurrent: usize, per_minute: Option<usize>) -> Self {
        RateLimiter {
            max_concurrent: max_concurrent.max(1),
            per_minute: per_minute.filter(|&n| n > 0),
            state: Mutex::new((0, VecDeque::new())),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut state = self.state.lock().unwrap();
        loop {
            let now = Instant::now();
            while state.1.front().is_some_and(|t| now.duration_since(*t) >= Duration::from_secs(60)) {
                state.1.pop_front();
            }
            let budget_ok = self.per_minute.is_none_or(|n| state.1.len() < n);
            if state.0 < self.max_concurrent && budget_ok {
                state.0 += 1;
                state.1.push_back(now);
                return;
            }
            let wait = if budget_ok {
                Duration::from_secs(60)
            } else {
                Duration::from_secs(60).saturating_sub(now.duration_since(state.1[0]))
            };
            state = self.freed.wait_timeout(state, wait).unwrap().0;
        }
    }

    fn release(&self) {
        self.state.lock().unwrap().0 -= 1;
        self.freed.notify_one();
    }

    /// Number of requests currently in flight.
    pub fn in_flight(&self) -> usize {
        self.state.lock().unwrap().0
    }
}

/// Wraps a client so every call goes through a [`RateLimiter`].
pub struct RateLimited<C> {
    pub inner: C,
    pub limiter: RateLimiter,
}

impl<C: ChatClient> ChatClient for RateLimited<C> {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<ChatExchange, GatewayError> {
        self.limiter.acquire();
        let out = self.inner.complete(prompt, temperature);
        self.limiter.release();
        out
    }
}
