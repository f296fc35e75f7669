//! Client for a remote embedding endpoint: `POST {"inputs": [...]}` with a
//! bearer token, `{"embeddings": [[...]]}` back, batched requests, and
//! exponential backoff on HTTP 429.

use crate::encoder::{Capabilities, EncoderInfo, EncoderKind, EncoderOutput, Pooling, TextEncoder};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::util::sha256_hex;
use ndarray::Array2;
use serde::Deserialize;
use std::sync::OnceLock;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: u32,
    pub max_retries: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base: Duration::from_secs(1),
            factor: 2,
            max_retries: 5,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, retry_index: u32) -> Duration {
        self.base * self.factor.saturating_pow(retry_index)
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub token: Option<String>,
    pub batch_size: usize,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            token: None,
            batch_size: 32,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(30),
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    embeddings: Vec<Vec<f64>>,
}

/// Black-box pooled-vector encoder behind an HTTP endpoint.
pub struct RemoteEncoder {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    dim: OnceLock<usize>,
}

impl RemoteEncoder {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(cfg.timeout)
            .build();
        RemoteEncoder {
            cfg,
            agent,
            dim: OnceLock::new(),
        }
    }

    fn request_batch(&self, batch: &[&str]) -> Result<Vec<Vec<f64>>> {
        let body = serde_json::json!({ "inputs": batch });
        let mut retries = 0u32;
        loop {
            let mut req = self
                .agent
                .post(&self.cfg.endpoint)
                .set("content-type", "application/json");
            if let Some(token) = &self.cfg.token {
                req = req.set("authorization", &format!("Bearer {token}"));
            }
            match req.send_json(body.clone()) {
                Ok(resp) => {
                    let parsed: EmbeddingsResponse = resp.into_json().map_err(|e| {
                        Error::Protocol(format!("embedding response is not valid JSON: {e}"))
                    })?;
                    if parsed.embeddings.len() != batch.len() {
                        return Err(Error::Protocol(format!(
                            "endpoint returned {} embeddings for {} inputs",
                            parsed.embeddings.len(),
                            batch.len()
                        )));
                    }
                    return Ok(parsed.embeddings);
                }
                Err(ureq::Error::Status(429, _)) if retries < self.cfg.retry.max_retries => {
                    let delay = self.cfg.retry.delay(retries);
                    retries += 1;
                    log::warn!(
                        "endpoint throttled (429); backing off {delay:?} (retry {retries}/{})",
                        self.cfg.retry.max_retries
                    );
                    std::thread::sleep(delay);
                }
                Err(ureq::Error::Status(status, resp)) => {
                    let msg = resp.into_string().unwrap_or_default();
                    return Err(Error::Transport {
                        status: Some(status),
                        retries,
                        msg: format!("endpoint returned status {status}: {msg}"),
                    });
                }
                Err(ureq::Error::Transport(t)) => {
                    return Err(Error::Transport {
                        status: None,
                        retries,
                        msg: t.to_string(),
                    });
                }
            }
        }
    }
}

impl<F: Scalar> TextEncoder<F> for RemoteEncoder {
    fn info(&self) -> EncoderInfo {
        EncoderInfo {
            kind: EncoderKind::Remote,
            capabilities: Capabilities::default(),
            max_len: usize::MAX,
            hidden_dim: self.dim.get().copied().unwrap_or(0),
            fingerprint: format!("remote-{}", sha256_hex(self.cfg.endpoint.as_bytes())),
        }
    }

    /// Pooling happens server-side; the strategy argument is ignored.
    fn encode(&self, texts: &[&str], _pooling: Pooling) -> Result<Array2<F>> {
        if texts.is_empty() {
            return Err(Error::EmptyInput("no texts to encode".into()));
        }
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.cfg.batch_size) {
            let embeddings = self.request_batch(batch)?;
            for embedding in embeddings {
                let dim = *self.dim.get_or_init(|| embedding.len());
                if embedding.len() != dim || embedding.is_empty() {
                    return Err(Error::Protocol(format!(
                        "embedding dimension changed from {dim} to {}",
                        embedding.len()
                    )));
                }
                rows.push(embedding);
            }
        }
        let dim = rows[0].len();
        let mut out = Array2::<F>::zeros((rows.len(), dim));
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out[[i, j]] = F::from_f64_lossy(v);
            }
        }
        Ok(out)
    }

    fn encode_tokens(
        &self,
        _text: &str,
        _want_attention: bool,
        _position_free: bool,
    ) -> Result<EncoderOutput<F>> {
        Err(Error::UnsupportedCapability {
            capability: "token embeddings (remote endpoints expose pooled vectors only)",
        })
    }
}
