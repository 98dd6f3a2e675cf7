//! Sources of contextual token embeddings for BERTScore. The metric code
//! never loads a model itself.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::bertscore::TokenEmbeddings;
use crate::http::{HttpError, JsonEndpoint};
use crate::textproc::tokenize;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("embedding provider returned {got} results for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error("no precomputed embeddings for text with hash {0}")]
    Missing(String),
    #[error("failed to load embeddings file {path}: {message}")]
    File { path: String, message: String },
}

pub trait EmbeddingProvider: Send + Sync {
    /// One entry per text, one vector per token.
    fn embed(&self, texts: &[&str]) -> Result<Vec<TokenEmbeddings>, EmbedError>;
}

/// Hex SHA-256 of the UTF-8 text; the key of precomputed embedding files.
pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<TokenEmbeddings>,
}

/// Client for `POST /embed`.
#[derive(Debug, Clone)]
pub struct HttpEmbeddingProvider {
    endpoint: JsonEndpoint,
    batch_size: usize,
}

impl HttpEmbeddingProvider {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self::with_endpoint(JsonEndpoint::new(base_url, Duration::from_secs(300)))
    }

    pub fn with_endpoint(endpoint: JsonEndpoint) -> Self {
        HttpEmbeddingProvider {
            endpoint,
            batch_size: 32,
        }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn embed(&self, texts: &[&str]) -> Result<Vec<TokenEmbeddings>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size.max(1)) {
            let response: EmbedResponse = self.endpoint.post("/embed", &EmbedRequest { texts: chunk })?;
            if response.embeddings.len() != chunk.len() {
                return Err(EmbedError::CountMismatch {
                    expected: chunk.len(),
                    got: response.embeddings.len(),
                });
            }
            out.extend(response.embeddings);
        }
        Ok(out)
    }
}

/// Precomputed embeddings: a JSON object mapping [`text_hash`] to the
/// per-token vectors of that text.
#[derive(Debug, Clone, Default)]
pub struct FileEmbeddingProvider {
    table: HashMap<String, TokenEmbeddings>,
}

impl FileEmbeddingProvider {
    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let file_err = |message: String| EmbedError::File {
            path: path.display().to_string(),
            message,
        };
        let raw = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let table = serde_json::from_str(&raw).map_err(|e| file_err(e.to_string()))?;
        Ok(FileEmbeddingProvider { table })
    }

    pub fn insert(&mut self, text: &str, embeddings: TokenEmbeddings) {
        self.table.insert(text_hash(text), embeddings);
    }
}

impl EmbeddingProvider for FileEmbeddingProvider {
    fn embed(&self, texts: &[&str]) -> Result<Vec<TokenEmbeddings>, EmbedError> {
        texts
            .iter()
            .map(|t| {
                let key = text_hash(t);
                self.table.get(&key).cloned().ok_or(EmbedError::Missing(key))
            })
            .collect()
    }
}

/// Offline stand-in: every word token maps to a fixed pseudo-random unit
/// vector derived from its hash, so equal tokens embed identically and
/// distinct tokens are nearly orthogonal. One vector per [`tokenize`] token.
#[derive(Debug, Clone, Copy)]
pub struct HashedEmbeddingProvider {
    pub dim: usize,
}

impl Default for HashedEmbeddingProvider {
    fn default() -> Self {
        HashedEmbeddingProvider { dim: 64 }
    }
}

impl HashedEmbeddingProvider {
    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let digest = Sha256::digest(token.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let v: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect()
    }
}

impl EmbeddingProvider for HashedEmbeddingProvider {
    fn embed(&self, texts: &[&str]) -> Result<Vec<TokenEmbeddings>, EmbedError> {
        Ok(texts
            .iter()
            .map(|t| tokenize(t).tokens.iter().map(|tok| self.token_vector(tok)).collect())
            .collect())
    }
}
