use std::collections::BTreeMap;

use serde::Serialize;

use super::{EvalError, SummaryRef, VerdictStore, CLASS_COUNT};
use crate::summarize::Approach;

/// A class counts as fulfilled when a strict majority of the `per_item`
/// reviewers marked it so (two of three by default).
pub fn majority_verdict(decisions: &[[bool; CLASS_COUNT]], per_item: usize) -> Result<[bool; CLASS_COUNT], EvalError> {
    if decisions.len() != per_item || per_item == 0 {
        return Err(EvalError::WrongVerdictCount {
            expected: per_item,
            found: decisions.len(),
        });
    }
    let mut out = [false; CLASS_COUNT];
    for (c, slot) in out.iter_mut().enumerate() {
        let yes = decisions.iter().filter(|d| d[c]).count();
        *slot = 2 * yes > per_item;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FulfillmentRow {
    pub approach: Approach,
    pub judgments: usize,
    /// Judgments whose majority verdict fulfills class `i + 1`.
    pub fulfilled: [usize; CLASS_COUNT],
    pub rates: [f64; CLASS_COUNT],
    /// Mean number of majority-fulfilled classes per judgment.
    pub mean_classes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FulfillmentReport {
    pub rows: Vec<FulfillmentRow>,
    pub excluded: Vec<(SummaryRef, usize)>,
}

impl FulfillmentReport {
    pub fn row(&self, approach: Approach) -> Option<&FulfillmentRow> {
        self.rows.iter().find(|r| r.approach == approach)
    }
}

/// Per approach, the share of judgments whose majority verdict fulfills each
/// class. Summaries without exactly `per_item` verdicts are excluded.
pub fn fulfillment_report(store: &VerdictStore, per_item: usize) -> FulfillmentReport {
    let mut majorities: BTreeMap<Approach, Vec<[bool; CLASS_COUNT]>> = BTreeMap::new();
    let mut excluded = Vec::new();
    for (s, vs) in store.by_summary() {
        let decisions: Vec<[bool; CLASS_COUNT]> = vs.iter().map(|v| v.decisions).collect();
        match majority_verdict(&decisions, per_item) {
            Ok(m) => majorities.entry(s.approach).or_default().push(m),
            Err(_) => excluded.push((s, vs.len())),
        }
    }
    let rows = majorities
        .into_iter()
        .map(|(approach, ms)| {
            let n = ms.len();
            let mut fulfilled = [0usize; CLASS_COUNT];
            for m in &ms {
                for (c, &d) in m.iter().enumerate() {
                    fulfilled[c] += usize::from(d);
                }
            }
            let rates = fulfilled.map(|f| f as f64 / n as f64);
            let mean_classes = fulfilled.iter().sum::<usize>() as f64 / n as f64;
            FulfillmentRow {
                approach,
                judgments: n,
                fulfilled,
                rates,
                mean_classes,
            }
        })
        .collect();
    FulfillmentReport { rows, excluded }
}
