use std::hash::Hash;

use super::Prf;
use crate::textproc::{ngrams, TextError};

/// ROUGE-N with clipped counts: each n-gram matches at most
/// `min(count in candidate, count in reference)` times.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> Result<Prf, TextError> {
    let cand = ngrams(candidate, n)?;
    let refs = ngrams(reference, n)?;
    let overlap: usize = cand
        .iter()
        .filter_map(|(gram, &c)| refs.get(gram).map(|&r| c.min(r)))
        .sum();
    let cand_total = candidate.len().saturating_sub(n - 1);
    let ref_total = reference.len().saturating_sub(n - 1);
    Ok(Prf::from_counts(overlap, cand_total, ref_total))
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) memory.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L over the whole token sequences (summary-level, single LCS).
pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> Prf {
    let l = lcs_len(candidate, reference);
    Prf::from_counts(l, candidate.len(), reference.len())
}
