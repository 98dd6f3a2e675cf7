use serde::{Deserialize, Serialize};

use super::{MetricError, Prf};

/// Per-token embedding vectors of one text.
pub type TokenEmbeddings = Vec<Vec<f64>>;

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BertScoreOptions {
    /// Weight tokens by inverse document frequency over the references.
    #[serde(default)]
    pub idf: bool,
    /// Rescale `x` to `(x − b) / (1 − b)` with this baseline.
    #[serde(default)]
    pub rescale_baseline: Option<f64>,
}

fn unit_vectors(vectors: &[Vec<f64>], dim: usize) -> Result<Vec<Vec<f64>>, MetricError> {
    vectors
        .iter()
        .map(|v| {
            if v.len() != dim {
                return Err(MetricError::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(MetricError::ZeroVector);
            }
            if (norm - 1.0).abs() <= NORM_TOLERANCE {
                Ok(v.clone())
            } else {
                Ok(v.iter().map(|x| x / norm).collect())
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn weighted_mean(values: &[f64], weights: Option<&[f64]>) -> f64 {
    match weights {
        None => values.iter().sum::<f64>() / values.len() as f64,
        Some(w) => {
            let total: f64 = w.iter().sum();
            if total == 0.0 {
                return 0.0;
            }
            values.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / total
        }
    }
}

/// Greedy-matching BERTScore without weighting or rescaling.
///
/// Recall averages, over reference tokens, the best cosine to any candidate
/// token; precision does the same from the candidate side.
pub fn bertscore(candidate: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<Prf, MetricError> {
    bertscore_weighted(candidate, None, reference, None, None)
}

/// BERTScore with optional per-token weights and baseline rescaling.
pub fn bertscore_weighted(
    candidate: &[Vec<f64>],
    candidate_weights: Option<&[f64]>,
    reference: &[Vec<f64>],
    reference_weights: Option<&[f64]>,
    rescale_baseline: Option<f64>,
) -> Result<Prf, MetricError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(MetricError::EmptyEmbeddings);
    }
    for (weights, len) in [(candidate_weights, candidate.len()), (reference_weights, reference.len())] {
        if let Some(w) = weights {
            if w.len() != len {
                return Err(MetricError::WeightMismatch {
                    tokens: len,
                    weights: w.len(),
                });
            }
        }
    }
    let dim = candidate[0].len();
    let cand = unit_vectors(candidate, dim)?;
    let refs = unit_vectors(reference, dim)?;

    let sims: Vec<Vec<f64>> = refs.iter().map(|r| cand.iter().map(|c| dot(r, c)).collect()).collect();
    let best_for_ref: Vec<f64> = sims
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let best_for_cand: Vec<f64> = (0..cand.len())
        .map(|j| sims.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();

    let mut recall = weighted_mean(&best_for_ref, reference_weights);
    let mut precision = weighted_mean(&best_for_cand, candidate_weights);
    if let Some(b) = rescale_baseline {
        recall = (recall - b) / (1.0 - b);
        precision = (precision - b) / (1.0 - b);
    }
    Ok(Prf::from_pr(precision, recall))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sequences_score_one() {
        let e = vec![vec![1.0, 0.0], vec![0.6, 0.8]];
        let s = bertscore(&e, &e).unwrap();
        assert!((s.f1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_fixture() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let cand = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let refs = vec![vec![1.0, 0.0], vec![h, h]];
        let s = bertscore(&cand, &refs).unwrap();
        let expected = (1.0 + h) / 2.0;
        assert!((s.precision - expected).abs() < 1e-12);
        assert!((s.recall - expected).abs() < 1e-12);
        assert!((s.f1 - 0.8536).abs() < 1e-4);
    }

    #[test]
    fn orthogonal_singletons() {
        let s = bertscore(&[vec![1.0, 0.0]], &[vec![0.0, 1.0]]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn normalizes_and_validates() {
        let s = bertscore(&[vec![3.0, 0.0]], &[vec![0.0, 2.0], vec![5.0, 0.0]]).unwrap();
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 0.5);
        assert!(matches!(bertscore(&[], &[vec![1.0]]), Err(MetricError::EmptyEmbeddings)));
        assert!(matches!(
            bertscore(&[vec![1.0, 0.0]], &[vec![1.0]]),
            Err(MetricError::DimensionMismatch { .. })
        ));
        assert!(matches!(bertscore(&[vec![0.0]], &[vec![1.0]]), Err(MetricError::ZeroVector)));
    }

    #[test]
    fn weights_and_rescaling() {
        let cand = vec![vec![1.0, 0.0]];
        let refs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let s = bertscore_weighted(&cand, None, &refs, Some(&[3.0, 1.0]), None).unwrap();
        assert_eq!(s.recall, 0.75);
        let s = bertscore_weighted(&cand, None, &refs, None, Some(0.5)).unwrap();
        assert_eq!(s.recall, 0.0);
        assert_eq!(s.precision, 1.0);
    }
}
