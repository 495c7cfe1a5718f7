//! HTTP client for an LLM reconstructor.
//!
//! Wire format: `POST {"prompt": ...}` answered by `{"text": ...}`. Each request
//! carries an `x-correlation-id` header; if the response echoes a
//! `correlation_id` field it must match.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ReconstructionResult;
use crate::bottleneck::ReconstructorInput;
use crate::error::{Error, Result};

/// The reconstruction prompt, shipped as a versioned resource and used byte-exactly.
pub const RECONSTRUCTION_PROMPT: &str = include_str!("../../resources/reconstruction_prompt.v1.txt");

/// Overrides the configured endpoint when set.
pub const ENDPOINT_ENV: &str = "CCS_RECONSTRUCTOR_URL";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    /// Extra attempts after the first failure.
    pub retries: u32,
    /// Delay before the first retry; doubles on every further retry.
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            timeout_ms: 30_000,
            retries: 3,
            backoff_ms: 200,
            max_in_flight: 8,
        }
    }
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            ..Self::default()
        }
    }

    /// Applies the `CCS_RECONSTRUCTOR_URL` override, if any.
    pub fn with_env_override(mut self) -> Self {
        if let Ok(url) = std::env::var(ENDPOINT_ENV) {
            if !url.is_empty() {
                self.endpoint = url;
            }
        }
        self
    }
}

/// Substitutes the serialized trajectory into the prompt.
pub fn render_prompt(input: &ReconstructorInput) -> String {
    RECONSTRUCTION_PROMPT.replace("{trajectory}", &input.to_json_line())
}

#[derive(Serialize)]
struct Request<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct Response {
    text: String,
    #[serde(default)]
    correlation_id: Option<String>,
}

pub struct RemoteReconstructor {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteReconstructor {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        if config.endpoint.is_empty() {
            return Err(Error::Config("remote reconstructor needs an endpoint".into()));
        }
        if config.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Ok(Self { config, agent })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn attempt(&self, prompt: &str, correlation_id: &str) -> std::result::Result<String, String> {
        let resp = self
            .agent
            .post(&self.config.endpoint)
            .set("x-correlation-id", correlation_id)
            .send_json(Request { prompt })
            .map_err(|e| e.to_string())?;
        let body: Response = resp.into_json().map_err(|e| format!("bad response body: {e}"))?;
        match body.correlation_id {
            Some(id) if id != correlation_id => {
                Err(format!("correlation id mismatch: sent {correlation_id}, got {id}"))
            }
            _ => Ok(body.text),
        }
    }

    /// One reconstruction with retries and exponential backoff.
    pub fn reconstruct(&self, input: &ReconstructorInput, correlation_id: &str) -> Result<ReconstructionResult> {
        let prompt = render_prompt(input);
        let attempts = self.config.retries + 1;
        let mut delay = self.config.backoff_ms;
        let mut last = String::new();
        for n in 0..attempts {
            if n > 0 {
                thread::sleep(Duration::from_millis(delay));
                delay = delay.saturating_mul(2);
            }
            match self.attempt(&prompt, correlation_id) {
                Ok(text) => return Ok(ReconstructionResult::from_text(&text)),
                Err(e) => last = e,
            }
        }
        Err(Error::Transport { attempts, detail: last })
    }

    /// Reconstructs a batch with at most `max_in_flight` concurrent requests.
    /// Results come back in input order; any transport error fails the batch.
    pub fn reconstruct_batch(&self, inputs: &[ReconstructorInput]) -> Result<Vec<ReconstructionResult>> {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<ReconstructionResult>>>> =
            Mutex::new((0..inputs.len()).map(|_| None).collect());
        let workers = self.config.max_in_flight.min(inputs.len());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(input) = inputs.get(i) else { break };
                    let id = format!("q{}-{}", input.question_id, i);
                    let out = self.reconstruct(input, &id);
                    slots.lock().expect("no worker panics while holding the lock")[i] = Some(out);
                });
            }
        });
        slots
            .into_inner()
            .expect("workers joined")
            .into_iter()
            .map(|s| s.expect("every slot is filled"))
            .collect()
    }
}
