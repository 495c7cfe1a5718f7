//! HTTP embedder: `POST {"text": ...}` answered by `{"vector": [...]}`.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::EmbeddingVector;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Overrides the configured embedder endpoint when set.
pub const EMBEDDER_ENV: &str = "CCS_EMBEDDER_URL";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    pub endpoint: String,
    pub dim: usize,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    3
}

#[derive(Serialize)]
struct Request<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct Response {
    vector: Vec<f64>,
}

pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    /// Connects and checks the endpoint's dimension against the config.
    pub fn connect(mut config: RemoteEmbedderConfig) -> Result<Self> {
        if let Ok(url) = std::env::var(EMBEDDER_ENV) {
            if !url.is_empty() {
                config.endpoint = url;
            }
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        let me = Self { config, agent };
        let probe = me.fetch("dimension probe")?;
        if probe.len() != me.config.dim {
            return Err(Error::Config(format!(
                "embedder returned dimension {}, config expects {}",
                probe.len(),
                me.config.dim
            )));
        }
        Ok(me)
    }

    fn fetch(&self, text: &str) -> Result<Vec<f64>> {
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for n in 0..attempts {
            if n > 0 {
                thread::sleep(Duration::from_millis(100 << (n - 1).min(10)));
            }
            let resp = self
                .agent
                .post(&self.config.endpoint)
                .send_json(Request { text })
                .map_err(|e| e.to_string())
                .and_then(|r| r.into_json::<Response>().map_err(|e| e.to_string()));
            match resp {
                Ok(r) => return Ok(r.vector),
                Err(e) => last = e,
            }
        }
        Err(Error::Transport { attempts, detail: last })
    }

    pub fn embed<T: Scalar>(&self, tokens: &[String]) -> Result<EmbeddingVector<T>> {
        if tokens.is_empty() {
            return Ok(EmbeddingVector::normalized(vec![T::zero(); self.config.dim]));
        }
        let v = self.fetch(&tokens.join(" "))?;
        if v.len() != self.config.dim {
            return Err(Error::Contract(format!(
                "embedder returned dimension {}, expected {}",
                v.len(),
                self.config.dim
            )));
        }
        Ok(EmbeddingVector::normalized(v.into_iter().map(T::lit).collect()))
    }
}
