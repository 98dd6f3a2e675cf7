//! Minimal blocking JSON-over-HTTP plumbing used by the tokenizer, generation
//! and embedding clients.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("transport error talking to {url}: {message}")]
    Transport { url: String, message: String },
    #[error("{url} answered with HTTP {status}: {body}")]
    Status {
        url: String,
        status: u16,
        body: String,
    },
    #[error("could not decode response from {url}: {message}")]
    Decode { url: String, message: String },
}

impl HttpError {
    /// Connection failures, 429 and 5xx are worth another attempt; other
    /// statuses and undecodable bodies are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            HttpError::Transport { .. } => true,
            HttpError::Status { status, .. } => *status == 429 || *status >= 500,
            HttpError::Decode { .. } => false,
        }
    }
}

/// Base URL plus optional auth header for a JSON service.
#[derive(Debug, Clone)]
pub struct JsonEndpoint {
    base_url: String,
    auth: Option<(String, String)>,
    agent: ureq::Agent,
}

impl JsonEndpoint {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        JsonEndpoint {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            auth: None,
            agent,
        }
    }

    pub fn with_auth(mut self, header: impl Into<String>, value: impl Into<String>) -> Self {
        self.auth = Some((header.into(), value.into()));
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, HttpError> {
        let url = format!("{}{}", self.base_url, path);
        let mut request = self.agent.post(&url);
        if let Some((name, value)) = &self.auth {
            request = request.header(name.as_str(), value.as_str());
        }
        let mut response = request.send_json(body).map_err(|e| HttpError::Transport {
            url: url.clone(),
            message: e.to_string(),
        })?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(HttpError::Status { url, status, body });
        }
        response
            .body_mut()
            .read_json::<R>()
            .map_err(|e| HttpError::Decode {
                url,
                message: e.to_string(),
            })
    }
}
