use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EvalError, SummaryRef};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub summary: SummaryRef,
    /// Sorted reviewer ids.
    pub reviewers: Vec<String>,
    pub presentation_order_seed: u64,
}

/// Assigns every summary to `per_item` distinct reviewers.
///
/// All summaries of one judgment share the same reviewers. Judgments are
/// handed out largest group first, each to the currently least-loaded
/// reviewers (load counted in summaries) with seeded tie-breaking. With one
/// summary per judgment the loads end up within 1 of each other; with groups
/// of g summaries they end up within g.
pub fn build_assignments(
    summaries: &[SummaryRef],
    reviewers: &[String],
    per_item: usize,
    seed: u64,
) -> Result<Vec<Assignment>, EvalError> {
    if per_item == 0 {
        return Err(EvalError::ZeroPerItem);
    }
    let mut seen = BTreeSet::new();
    for r in reviewers {
        if !seen.insert(r.as_str()) {
            return Err(EvalError::DuplicateReviewer(r.clone()));
        }
    }
    if reviewers.len() < per_item {
        return Err(EvalError::TooFewReviewers {
            available: reviewers.len(),
            per_item,
        });
    }

    let mut groups: BTreeMap<&str, BTreeSet<&SummaryRef>> = BTreeMap::new();
    for s in summaries {
        groups.entry(s.judgment_id.as_str()).or_default().insert(s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<(&str, BTreeSet<&SummaryRef>)> = groups.into_iter().collect();
    order.shuffle(&mut rng);
    // Stable, so equal-sized groups keep their shuffled order.
    order.sort_by_key(|(_, g)| std::cmp::Reverse(g.len()));

    let mut load = vec![0usize; reviewers.len()];
    let mut out = Vec::with_capacity(summaries.len());
    for (_, group) in order {
        let mut candidates: Vec<usize> = (0..reviewers.len()).collect();
        candidates.shuffle(&mut rng);
        candidates.sort_by_key(|&r| load[r]);
        let mut chosen: Vec<&String> = candidates[..per_item].iter().map(|&r| &reviewers[r]).collect();
        for &r in &candidates[..per_item] {
            load[r] += group.len();
        }
        chosen.sort();
        for s in group {
            out.push(Assignment {
                summary: s.clone(),
                reviewers: chosen.iter().map(|r| r.to_string()).collect(),
                presentation_order_seed: seed,
            });
        }
    }
    out.sort_by(|a, b| a.summary.cmp(&b.summary));
    Ok(out)
}

fn reviewer_seed(seed: u64, reviewer: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(reviewer.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// The order in which `reviewer` sees their summaries: a shuffle seeded by
/// the assignment seed and the reviewer id, independent of approach labels.
pub fn presentation_order(assignments: &[Assignment], reviewer: &str) -> Vec<SummaryRef> {
    let mine: Vec<&Assignment> = assignments
        .iter()
        .filter(|a| a.reviewers.iter().any(|r| r == reviewer))
        .collect();
    let Some(first) = mine.first() else {
        return Vec::new();
    };
    let mut items: Vec<SummaryRef> = mine.iter().map(|a| a.summary.clone()).collect();
    items.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(reviewer_seed(first.presentation_order_seed, reviewer));
    items.shuffle(&mut rng);
    items
}
