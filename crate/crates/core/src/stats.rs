//! Descriptive statistics shared by the length and score reports.

use serde::{Deserialize, Serialize};

/// Minimum, mean, maximum and sample standard deviation of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Describe {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for a single value.
    pub std: f64,
}

/// Returns `None` for an empty series.
pub fn describe(values: &[f64]) -> Option<Describe> {
    if values.is_empty() {
        return None;
    }
    let count = values.len();
    let mean = values.iter().sum::<f64>() / count as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let std = if count > 1 {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (count - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(Describe {
        count,
        min,
        mean,
        max,
        std,
    })
}
