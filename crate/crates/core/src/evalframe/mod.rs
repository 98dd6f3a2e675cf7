//! The seven-class human evaluation protocol: class definitions, reviewer
//! verdicts, blinded assignment, agreement and fulfillment analytics.

mod agreement;
mod assign;
mod correlation;
mod fulfillment;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agreement::{fleiss_kappa, pairwise_kappa_matrix, per_class_kappa, ClassAgreement, Kappa, PairwiseKappa, PerClassReport};
pub use assign::{build_assignments, presentation_order, Assignment};
pub use correlation::{
    cohen_band, landis_band, metric_class_correlations, spearman, CohenBand, CorrelationRow, LandisBand, ScoreComponent,
};
pub use fulfillment::{fulfillment_report, majority_verdict, FulfillmentReport, FulfillmentRow};

use crate::summarize::Approach;

pub const CLASS_COUNT: usize = 7;

/// Index of the superiority class, whose positive verdict needs a reasoning.
pub const SUPERIORITY: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EvalClass {
    pub index: usize,
    pub aspect: &'static str,
    pub description: &'static str,
}

pub const EVAL_CLASSES: [EvalClass; CLASS_COUNT] = [
    EvalClass {
        index: 1,
        aspect: "Intelligibility",
        description: "Intelligible result",
    },
    EvalClass {
        index: 2,
        aspect: "Language",
        description: "Correct use of German language",
    },
    EvalClass {
        index: 3,
        aspect: "Pertinence",
        description: "Only necessary information",
    },
    EvalClass {
        index: 4,
        aspect: "Completeness",
        description: "Inclusion of every aspect",
    },
    EvalClass {
        index: 5,
        aspect: "Main Focus",
        description: "Inclusion of 3/4 of aspects",
    },
    EvalClass {
        index: 6,
        aspect: "Correctness",
        description: "No error in legal reasoning",
    },
    EvalClass {
        index: 7,
        aspect: "Superiority",
        description: "Superior compared to the original",
    },
];

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("need at least {per_item} distinct reviewers, have {available}")]
    TooFewReviewers { available: usize, per_item: usize },
    #[error("reviewers per item must be at least 1")]
    ZeroPerItem,
    #[error("reviewer {0:?} listed twice")]
    DuplicateReviewer(String),
    #[error("expected {expected} verdicts, found {found}")]
    WrongVerdictCount { expected: usize, found: usize },
    #[error("Fleiss' kappa needs at least two raters per unit")]
    TooFewRaters,
    #[error("Fleiss' kappa needs at least one unit")]
    NoUnits,
    #[error("unit {unit} has {found} ratings or categories where {expected} were expected")]
    RaggedUnits { unit: usize, expected: usize, found: usize },
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least 3 observations, got {0}")]
    TooShort(usize),
    #[error("correlation undefined for a constant series")]
    Undefined,
    #[error("value {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("superiority verdict requires a written reasoning")]
    MissingReasoning,
    #[error("reviewer {reviewer} already judged {judgment_id}/{approach}")]
    DuplicateVerdict {
        reviewer: String,
        judgment_id: String,
        approach: Approach,
    },
    #[error("no verdict by {reviewer} for {judgment_id}/{approach} to supersede")]
    NothingToSupersede {
        reviewer: String,
        judgment_id: String,
        approach: Approach,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A summary as reviewers know it: judgment plus (hidden) approach.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SummaryRef {
    pub judgment_id: String,
    pub approach: Approach,
}

impl SummaryRef {
    pub fn new(judgment_id: impl Into<String>, approach: Approach) -> Self {
        SummaryRef {
            judgment_id: judgment_id.into(),
            approach,
        }
    }
}

/// One reviewer's seven decisions on one summary. Serialized as the verdict
/// export line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassVerdict {
    pub reviewer: String,
    pub judgment_id: String,
    pub approach: Approach,
    pub decisions: [bool; CLASS_COUNT],
    #[serde(default)]
    pub reasoning: String,
    #[serde(default)]
    pub comment: Option<String>,
    pub ts: DateTime<Utc>,
}

impl ClassVerdict {
    pub fn summary(&self) -> SummaryRef {
        SummaryRef::new(self.judgment_id.clone(), self.approach)
    }

    /// Decision for class `index` (1-based).
    pub fn decision(&self, index: usize) -> bool {
        self.decisions[index - 1]
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.decision(SUPERIORITY) && self.reasoning.trim().is_empty() {
            return Err(EvalError::MissingReasoning);
        }
        Ok(())
    }
}

/// Current verdicts keyed by (reviewer, summary), plus every superseded
/// verdict for audit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerdictStore {
    current: BTreeMap<(String, SummaryRef), ClassVerdict>,
    superseded: Vec<ClassVerdict>,
}

impl VerdictStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    pub fn contains(&self, reviewer: &str, summary: &SummaryRef) -> bool {
        self.current.contains_key(&(reviewer.to_string(), summary.clone()))
    }

    /// Adds a first verdict; a second one for the same (reviewer, summary) is
    /// rejected.
    pub fn submit(&mut self, verdict: ClassVerdict) -> Result<(), EvalError> {
        verdict.validate()?;
        let key = (verdict.reviewer.clone(), verdict.summary());
        if self.current.contains_key(&key) {
            return Err(EvalError::DuplicateVerdict {
                reviewer: verdict.reviewer,
                judgment_id: verdict.judgment_id,
                approach: verdict.approach,
            });
        }
        self.current.insert(key, verdict);
        Ok(())
    }

    /// Replaces an existing verdict, keeping the old one in the audit trail.
    pub fn supersede(&mut self, verdict: ClassVerdict) -> Result<(), EvalError> {
        verdict.validate()?;
        let key = (verdict.reviewer.clone(), verdict.summary());
        let Some(old) = self.current.insert(key.clone(), verdict) else {
            let v = self.current.remove(&key).expect("just inserted");
            return Err(EvalError::NothingToSupersede {
                reviewer: v.reviewer,
                judgment_id: v.judgment_id,
                approach: v.approach,
            });
        };
        self.superseded.push(old);
        Ok(())
    }

    pub fn superseded(&self) -> &[ClassVerdict] {
        &self.superseded
    }

    /// Current verdicts ordered by (reviewer, judgment, approach).
    pub fn iter(&self) -> impl Iterator<Item = &ClassVerdict> {
        self.current.values()
    }

    pub fn reviewers(&self) -> BTreeSet<&str> {
        self.current.keys().map(|(r, _)| r.as_str()).collect()
    }

    /// Current verdicts grouped per summary, reviewers in sorted order.
    pub fn by_summary(&self) -> BTreeMap<SummaryRef, Vec<&ClassVerdict>> {
        let mut out: BTreeMap<SummaryRef, Vec<&ClassVerdict>> = BTreeMap::new();
        for v in self.current.values() {
            out.entry(v.summary()).or_default().push(v);
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in self.iter() {
            serde_json::to_writer(&mut out, v)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Reads verdict export lines. A later line for the same (reviewer,
    /// summary) supersedes the earlier one.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, EvalError> {
        let mut store = VerdictStore::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| EvalError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let verdict: ClassVerdict = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let parse_err = |e: EvalError| EvalError::Parse {
                line: i + 1,
                message: e.to_string(),
            };
            if store.contains(&verdict.reviewer, &verdict.summary()) {
                store.supersede(verdict).map_err(parse_err)?;
            } else {
                store.submit(verdict).map_err(parse_err)?;
            }
        }
        Ok(store)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn verdict(reviewer: &str, judgment: &str, approach: Approach, decisions: [bool; 7]) -> ClassVerdict {
        ClassVerdict {
            reviewer: reviewer.into(),
            judgment_id: judgment.into(),
            approach,
            decisions,
            reasoning: if decisions[6] { "besser".into() } else { String::new() },
            comment: None,
            ts: DateTime::from_timestamp(1_700_000_000, 0).unwrap(),
        }
    }

    #[test]
    fn class_table() {
        assert_eq!(EVAL_CLASSES.len(), 7);
        assert_eq!(EVAL_CLASSES[4].aspect, "Main Focus");
        assert_eq!(EVAL_CLASSES[4].description, "Inclusion of 3/4 of aspects");
        assert!(EVAL_CLASSES.iter().enumerate().all(|(i, c)| c.index == i + 1));
    }

    #[test]
    fn superiority_requires_reasoning() {
        let mut v = verdict("A", "j", Approach::Lexrank, [false; 7]);
        assert!(v.validate().is_ok());
        v.decisions[6] = true;
        assert_eq!(v.validate(), Err(EvalError::MissingReasoning));
        v.reasoning = "zitiert die Norm".into();
        assert!(v.validate().is_ok());
    }

    #[test]
    fn store_rejects_duplicates_and_keeps_audit_trail() {
        let mut store = VerdictStore::new();
        store.submit(verdict("A", "j", Approach::Lexrank, [true; 7])).unwrap();
        assert!(matches!(
            store.submit(verdict("A", "j", Approach::Lexrank, [false; 7])),
            Err(EvalError::DuplicateVerdict { .. })
        ));
        store.supersede(verdict("A", "j", Approach::Lexrank, [false; 7])).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.superseded().len(), 1);
        assert!(store.iter().next().unwrap().decisions.iter().all(|d| !d));
        assert!(store.supersede(verdict("B", "j", Approach::Lexrank, [false; 7])).is_err());
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn jsonl_round_trip_and_format() {
        let mut store = VerdictStore::new();
        store.submit(verdict("B", "j2", Approach::ModelPlain, [true, false, true, false, true, false, false])).unwrap();
        store.submit(verdict("A", "j1", Approach::Lexrank, [true; 7])).unwrap();
        let text = store.to_jsonl();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let keys: BTreeSet<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            ["approach", "comment", "decisions", "judgment_id", "reasoning", "reviewer", "ts"].into_iter().collect()
        );
        assert_eq!(first["reviewer"], "A");
        let back = VerdictStore::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, store);
    }
}
