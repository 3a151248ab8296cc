//! Chat-completions client for a remote reasoner.

use std::thread;
use std::time::Duration;

use log::warn;
use serde_json::{json, Value};

use super::prompt::RethinkRequest;
use super::reasoner::{Reasoner, TransportError};
use crate::config::TtrConfig;
use crate::{Result, RuleError};

#[derive(Debug)]
pub struct HttpReasoner {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    token: String,
    max_attempts: usize,
    backoff: Duration,
}

impl HttpReasoner {
    /// Reads the bearer token from the configured environment variable.
    pub fn from_config(cfg: &TtrConfig) -> Result<Self> {
        let token = std::env::var(&cfg.token_env)
            .map_err(|_| RuleError::Reasoner(format!("environment variable {} is not set", cfg.token_env)))?;
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .build();
        Ok(HttpReasoner {
            agent: ureq::Agent::new_with_config(config),
            endpoint: cfg.endpoint.clone(),
            model: cfg.model.clone(),
            token,
            max_attempts: cfg.max_attempts,
            backoff: Duration::from_millis(cfg.backoff_ms),
        })
    }

    fn body(&self, prompt: &str) -> Value {
        json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        })
    }

    fn post_once(&self, prompt: &str) -> std::result::Result<String, String> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.token))
            .send_json(self.body(prompt))
            .map_err(|e| e.to_string())?;
        let v: Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| format!("response without message content: {v}"))
    }
}

impl Reasoner for HttpReasoner {
    fn complete(&self, request: &RethinkRequest, prompt: &str, _attempt: usize) -> std::result::Result<String, TransportError> {
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 0..self.max_attempts {
            match self.post_once(prompt) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    warn!("reasoner call for query {} failed (attempt {}): {e}", request.query, attempt + 1);
                    last = e;
                }
            }
            if attempt + 1 < self.max_attempts {
                thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(TransportError(last))
    }
}
