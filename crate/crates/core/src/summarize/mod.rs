//! Candidate summary production: the LexRank extractive baseline and
//! summaries generated by an external model endpoint.

mod budget;
mod generation;
mod lexrank;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use budget::{truncate_to_budget, TokenBudget};
pub use generation::{
    generate_many, generate_summary, Decoding, GenerationClient, GenerationError, GenerationParams, GenerationRequest,
    GenerationResponse, HttpGenerationClient, RetryPolicy,
};
pub use lexrank::{
    lexrank_summary, power_iteration, tfidf_similarity, CentralityVector, Extract, LexRank, LexRankParams,
    SquareMatrix, StochasticMatrix,
};

use crate::textproc::CountError;

#[derive(Debug, Error)]
pub enum SummarizeError {
    #[error("document has no sentences")]
    EmptyDocument,
    #[error("summary length must be at least one sentence")]
    ZeroLength,
    #[error("damping must lie strictly between 0 and 1, got {0}")]
    InvalidDamping(f64),
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("generation budget {generation_budget} must be smaller than the context window {context_window}")]
    InvalidBudget {
        context_window: usize,
        generation_budget: usize,
    },
    #[error(transparent)]
    Count(#[from] CountError),
}

/// How a summary was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Lexrank,
    ModelPlain,
    ModelEnriched,
    Gold,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::Lexrank, Approach::ModelPlain, Approach::ModelEnriched, Approach::Gold];

    pub fn as_str(self) -> &'static str {
        match self {
            Approach::Lexrank => "lexrank",
            Approach::ModelPlain => "model_plain",
            Approach::ModelEnriched => "model_enriched",
            Approach::Gold => "gold",
        }
    }
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Approach {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Approach::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown approach {s:?}"))
    }
}

/// A candidate summary for one judgment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub judgment_id: String,
    pub approach: Approach,
    pub text: String,
    pub token_count: usize,
    pub sentence_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_params: Option<GenerationParams>,
    /// The generator legitimately returned no text.
    #[serde(default)]
    pub empty: bool,
    /// Non-retryable generation failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}
