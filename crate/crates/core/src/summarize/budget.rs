use serde::{Deserialize, Serialize};

use super::SummarizeError;
use crate::textproc::{tokenize, TokenCounter};

/// Context-window accounting for one generation endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub context_window: usize,
    pub generation_budget: usize,
    /// Tokens taken by the endpoint's prompt template.
    pub prompt_overhead: usize,
}

impl Default for TokenBudget {
    fn default() -> Self {
        TokenBudget {
            context_window: 32_768,
            generation_budget: 750,
            prompt_overhead: 64,
        }
    }
}

impl TokenBudget {
    /// Tokens left for the input text.
    pub fn input_limit(&self) -> Result<usize, SummarizeError> {
        if self.generation_budget >= self.context_window {
            return Err(SummarizeError::InvalidBudget {
                context_window: self.context_window,
                generation_budget: self.generation_budget,
            });
        }
        Ok(self
            .context_window
            .saturating_sub(self.generation_budget)
            .saturating_sub(self.prompt_overhead))
    }
}

/// Cuts trailing tokens until `counter` measures at most
/// [`TokenBudget::input_limit`] tokens. Text within budget is returned as is.
///
/// Cut points are word-token ends, found by binary search over prefixes, so
/// any counter (including remote ones) can be used.
pub fn truncate_to_budget(text: &str, budget: TokenBudget, counter: &dyn TokenCounter) -> Result<String, SummarizeError> {
    let limit = budget.input_limit()?;
    if counter.count(text)? <= limit {
        return Ok(text.to_string());
    }
    let mut byte_of: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    byte_of.push(text.len());
    let cuts: Vec<usize> = tokenize(text).offsets.iter().map(|&(_, end)| byte_of[end]).collect();
    let prefix = |m: usize| if m == 0 { "" } else { &text[..cuts[m - 1]] };
    let (mut lo, mut hi) = (0usize, cuts.len());
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        let p = prefix(mid);
        if !p.is_empty() && counter.count(p)? <= limit {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(prefix(lo).to_string())
}
