use std::thread;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Approach, SummaryRecord};
use crate::http::JsonEndpoint;
use crate::textproc::{count_tokens, split_sentences, TokenCounter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoding {
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_new_tokens: usize,
    pub decoding: Decoding,
    /// Name of the endpoint profile that served the request.
    pub endpoint: String,
}

/// Body of `POST /generate`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub input: String,
    pub max_new_tokens: usize,
    pub decoding: Decoding,
    pub special_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GenerationError {
    /// Connection problems and server-side failures; worth retrying.
    #[error("transport error: {0}")]
    Transport(String),
    /// The model rejected the request; retrying will not help.
    #[error("model error: {0}")]
    Model(String),
}

pub trait GenerationClient: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GenerationError>;
}

/// Client for the `POST /generate` endpoint contract.
#[derive(Debug, Clone)]
pub struct HttpGenerationClient {
    endpoint: JsonEndpoint,
}

impl HttpGenerationClient {
    pub fn new(endpoint: JsonEndpoint) -> Self {
        HttpGenerationClient { endpoint }
    }
}

impl GenerationClient for HttpGenerationClient {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GenerationError> {
        self.endpoint.post("/generate", request).map_err(|e| {
            if e.is_retryable() {
                GenerationError::Transport(e.to_string())
            } else {
                GenerationError::Model(e.to_string())
            }
        })
    }
}

/// Exponential backoff: `base_delay`, `2·base_delay`, … between attempts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn run<T>(&self, mut call: impl FnMut() -> Result<T, GenerationError>) -> Result<T, GenerationError> {
        let mut delay = self.base_delay;
        let mut attempt = 1;
        loop {
            match call() {
                Err(GenerationError::Transport(_)) if attempt < self.attempts.max(1) => {
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Sends `input` (already truncated to budget) to the generator.
///
/// Empty generations are kept and flagged; model errors become a failed
/// record. Only exhausted transport retries surface as `Err`.
#[allow(clippy::too_many_arguments)]
pub fn generate_summary(
    client: &dyn GenerationClient,
    judgment_id: &str,
    input: &str,
    approach: Approach,
    params: &GenerationParams,
    special_tokens: &[String],
    retry: RetryPolicy,
    counter: &dyn TokenCounter,
) -> Result<SummaryRecord, GenerationError> {
    let request = GenerationRequest {
        input: input.to_string(),
        max_new_tokens: params.max_new_tokens,
        decoding: params.decoding,
        special_tokens: special_tokens.to_vec(),
    };
    let (text, failure) = match retry.run(|| client.generate(&request)) {
        Ok(response) => (response.text, None),
        Err(GenerationError::Model(message)) => (String::new(), Some(message)),
        Err(e) => return Err(e),
    };
    let token_count = count_tokens(&text, counter).map_err(|e| GenerationError::Transport(e.to_string()))?;
    Ok(SummaryRecord {
        judgment_id: judgment_id.to_string(),
        approach,
        sentence_count: split_sentences(&text).len(),
        token_count,
        empty: text.trim().is_empty(),
        text,
        generation_params: Some(params.clone()),
        failure,
    })
}

/// Generates for many `(judgment_id, input)` pairs with at most `connections`
/// requests in flight. Results come back in input order.
#[allow(clippy::too_many_arguments)]
pub fn generate_many(
    client: &dyn GenerationClient,
    inputs: &[(String, String)],
    approach: Approach,
    params: &GenerationParams,
    special_tokens: &[String],
    retry: RetryPolicy,
    counter: &dyn TokenCounter,
    connections: usize,
) -> Vec<Result<SummaryRecord, GenerationError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(connections.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        inputs
            .par_iter()
            .map(|(id, input)| generate_summary(client, id, input, approach, params, special_tokens, retry, counter))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    use super::*;
    use crate::textproc::WordCounter;

    struct Scripted {
        replies: Mutex<Vec<Result<GenerationResponse, GenerationError>>>,
        calls: AtomicUsize,
        seen: Mutex<Vec<GenerationRequest>>,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<GenerationResponse, GenerationError>>) -> Self {
            replies.reverse();
            Scripted {
                replies: Mutex::new(replies),
                calls: AtomicUsize::new(0),
                seen: Mutex::new(Vec::new()),
            }
        }
    }

    impl GenerationClient for Scripted {
        fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GenerationError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.seen.lock().unwrap().push(request.clone());
            self.replies.lock().unwrap().pop().expect("scripted reply")
        }
    }

    fn params() -> GenerationParams {
        GenerationParams {
            max_new_tokens: 750,
            decoding: Decoding::Greedy,
            endpoint: "stub".into(),
        }
    }

    fn fast() -> RetryPolicy {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::ZERO,
        }
    }

    fn ok(text: &str) -> Result<GenerationResponse, GenerationError> {
        Ok(GenerationResponse { text: text.into() })
    }

    #[test]
    fn passthrough_and_empty_flag() {
        let client = Scripted::new(vec![ok("LEITSATZ"), ok("")]);
        let rec = generate_summary(&client, "j1", "input", Approach::ModelPlain, &params(), &[], fast(), &WordCounter).unwrap();
        assert_eq!(rec.text, "LEITSATZ");
        assert_eq!(rec.approach, Approach::ModelPlain);
        assert!(!rec.empty);
        let rec = generate_summary(&client, "j1", "input", Approach::ModelPlain, &params(), &[], fast(), &WordCounter).unwrap();
        assert!(rec.empty);
        assert_eq!(rec.sentence_count, 0);
    }

    #[test]
    fn retries_transport_errors_three_times() {
        let t = || Err(GenerationError::Transport("down".into()));
        let client = Scripted::new(vec![t(), t(), ok("ok")]);
        let rec = generate_summary(&client, "j", "x", Approach::ModelPlain, &params(), &[], fast(), &WordCounter).unwrap();
        assert_eq!(rec.text, "ok");
        assert_eq!(client.calls.load(Ordering::SeqCst), 3);

        let client = Scripted::new(vec![t(), t(), t()]);
        let err = generate_summary(&client, "j", "x", Approach::ModelPlain, &params(), &[], fast(), &WordCounter).unwrap_err();
        assert!(matches!(err, GenerationError::Transport(_)));
        assert_eq!(client.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn model_errors_are_recorded_not_retried() {
        let client = Scripted::new(vec![Err(GenerationError::Model("bad input".into()))]);
        let rec = generate_summary(&client, "j", "x", Approach::ModelEnriched, &params(), &[], fast(), &WordCounter).unwrap();
        assert_eq!(rec.failure.as_deref(), Some("bad input"));
        assert!(rec.empty);
        assert_eq!(client.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn request_body_carries_params_verbatim() {
        let client = Scripted::new(vec![ok("x")]);
        let special = vec!["<GS>".to_string(), "</GS>".to_string()];
        generate_summary(&client, "j", "Text", Approach::ModelEnriched, &params(), &special, fast(), &WordCounter).unwrap();
        let seen = client.seen.lock().unwrap();
        let body = serde_json::to_value(&seen[0]).unwrap();
        assert_eq!(
            body,
            serde_json::json!({
                "input": "Text",
                "max_new_tokens": 750,
                "decoding": "greedy",
                "special_tokens": ["<GS>", "</GS>"]
            })
        );
    }

    #[test]
    fn many_keeps_input_order() {
        struct Echo;
        impl GenerationClient for Echo {
            fn generate(&self, r: &GenerationRequest) -> Result<GenerationResponse, GenerationError> {
                Ok(GenerationResponse {
                    text: r.input.to_uppercase(),
                })
            }
        }
        let inputs: Vec<(String, String)> = (0..20).map(|i| (format!("j{i}"), format!("text {i}"))).collect();
        let out = generate_many(&Echo, &inputs, Approach::ModelPlain, &params(), &[], fast(), &WordCounter, 4);
        for (i, rec) in out.into_iter().enumerate() {
            let rec = rec.unwrap();
            assert_eq!(rec.judgment_id, format!("j{i}"));
            assert_eq!(rec.text, format!("TEXT {i}"));
        }
    }
}
