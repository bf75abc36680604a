use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Embedding, EmbeddingError, EmbeddingProvider};

/// Delays between attempts; one retry per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub backoff: Vec<Duration>,
    pub request_timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            backoff: vec![
                Duration::from_millis(500),
                Duration::from_secs(1),
                Duration::from_secs(2),
            ],
            request_timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

/// Client for an embedding server speaking
/// `POST {"texts": [...]}` -> `{"embeddings": [[...], ...]}`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    endpoint: String,
    dimension: usize,
    batch_size: usize,
    retry: RetryPolicy,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, dimension: usize, batch_size: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            dimension,
            batch_size: batch_size.max(1),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn agent(&self) -> ureq::Agent {
        ureq::Agent::config_builder()
            .timeout_global(Some(self.retry.request_timeout))
            .build()
            .into()
    }

    fn request_once(&self, agent: &ureq::Agent, batch: &[&str]) -> Result<EmbedResponse, String> {
        let mut response = agent
            .post(&self.endpoint)
            .send_json(EmbedRequest { texts: batch })
            .map_err(|e| e.to_string())?;
        response
            .body_mut()
            .read_json::<EmbedResponse>()
            .map_err(|e| format!("undecodable response: {e}"))
    }

    fn embed_chunk(
        &self,
        agent: &ureq::Agent,
        batch: &[&str],
    ) -> Result<Vec<Embedding>, EmbeddingError> {
        let mut attempt = 0;
        let response = loop {
            match self.request_once(agent, batch) {
                Ok(r) => break r,
                Err(e) => {
                    let Some(delay) = self.retry.backoff.get(attempt) else {
                        return Err(EmbeddingError::ProviderUnavailable(format!(
                            "{} after {} attempts: {e}",
                            self.endpoint,
                            attempt + 1
                        )));
                    };
                    log::warn!("embedding request failed ({e}); retrying in {delay:?}");
                    thread::sleep(*delay);
                    attempt += 1;
                }
            }
        };
        if response.embeddings.len() != batch.len() {
            return Err(EmbeddingError::BadResponse(format!(
                "sent {} texts, received {} embeddings",
                batch.len(),
                response.embeddings.len()
            )));
        }
        response
            .embeddings
            .into_iter()
            .map(|v| {
                if v.len() != self.dimension {
                    return Err(EmbeddingError::DimensionMismatch {
                        expected: self.dimension,
                        actual: v.len(),
                    });
                }
                Embedding::new(v)
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        let agent = self.agent();
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            out.extend(self.embed_chunk(&agent, chunk)?);
        }
        Ok(out)
    }
}
