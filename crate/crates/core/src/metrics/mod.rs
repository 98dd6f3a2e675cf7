//! Automatic scoring of candidate summaries against the gold guiding
//! principles: ROUGE-1/2/L and BERTScore, per summary and per corpus.

mod bertscore;
pub mod embeddings;
mod rouge;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bertscore::{bertscore, bertscore_weighted, BertScoreOptions, TokenEmbeddings};
pub use embeddings::{EmbedError, EmbeddingProvider, FileEmbeddingProvider, HashedEmbeddingProvider, HttpEmbeddingProvider};
pub use rouge::{lcs_len, rouge_l, rouge_n};

use crate::stats::{describe, Describe};
use crate::summarize::{Approach, SummaryRecord};
use crate::textproc::tokenize;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("BERTScore needs at least one token on each side")]
    EmptyEmbeddings,
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot normalize a zero embedding vector")]
    ZeroVector,
    #[error("{weights} weights given for {tokens} tokens")]
    WeightMismatch { tokens: usize, weights: usize },
    #[error("BERTScore requested but no embedding provider configured")]
    NoEmbeddingProvider,
    #[error("IDF weighting needs one embedding per word token; got {vectors} vectors for {tokens} tokens")]
    IdfAlignment { tokens: usize, vectors: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("no summary has a non-empty gold reference")]
    NothingToScore,
}

/// Precision, recall and their harmonic mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }

    /// From a match count and the two totals; an empty total gives 0.
    pub fn from_counts(matches: usize, candidate_total: usize, reference_total: usize) -> Self {
        let ratio = |total: usize| if total == 0 { 0.0 } else { matches as f64 / total as f64 };
        Self::from_pr(ratio(candidate_total), ratio(reference_total))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "ROUGE-1")]
    Rouge1,
    #[serde(rename = "ROUGE-2")]
    Rouge2,
    #[serde(rename = "ROUGE-L")]
    RougeL,
    #[serde(rename = "BERTScore")]
    BertScore,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Rouge1, Metric::Rouge2, Metric::RougeL, Metric::BertScore];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Rouge1 => "ROUGE-1",
            Metric::Rouge2 => "ROUGE-2",
            Metric::RougeL => "ROUGE-L",
            Metric::BertScore => "BERTScore",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase().replace(['-', '_'], "");
        match key.as_str() {
            "rouge1" => Ok(Metric::Rouge1),
            "rouge2" => Ok(Metric::Rouge2),
            "rougel" => Ok(Metric::RougeL),
            "bertscore" => Ok(Metric::BertScore),
            _ => Err(format!("unknown metric {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub bertscore: BertScoreOptions,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            metrics: Metric::ALL.to_vec(),
            bertscore: BertScoreOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub judgment_id: String,
    pub approach: Approach,
    pub metric: Metric,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ScoreRow {
    pub fn prf(&self) -> Prf {
        Prf {
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
        }
    }
}

/// Corpus-level spread of F-scores for one (metric, approach).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub metric: Metric,
    pub approach: Approach,
    #[serde(flatten)]
    pub stats: Describe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedSummary {
    pub judgment_id: String,
    pub approach: Approach,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Sorted by (judgment, approach, metric).
    pub per_summary: Vec<ScoreRow>,
    /// Metric-major, then approach.
    pub corpus: Vec<AggregateRow>,
    pub excluded: Vec<ExcludedSummary>,
}

impl MetricReport {
    /// Rebuilds corpus aggregates from per-summary rows.
    pub fn aggregate(per_summary: &[ScoreRow]) -> Vec<AggregateRow> {
        let mut groups: BTreeMap<(Metric, Approach), Vec<f64>> = BTreeMap::new();
        for row in per_summary {
            groups.entry((row.metric, row.approach)).or_default().push(row.f1);
        }
        groups
            .into_iter()
            .map(|((metric, approach), values)| AggregateRow {
                metric,
                approach,
                stats: describe(&values).expect("groups are non-empty"),
            })
            .collect()
    }

    pub fn get(&self, judgment_id: &str, approach: Approach, metric: Metric) -> Option<Prf> {
        self.per_summary
            .iter()
            .find(|r| r.judgment_id == judgment_id && r.approach == approach && r.metric == metric)
            .map(ScoreRow::prf)
    }
}

/// Reference-side IDF, `ln((M + 1) / (df + 1))`, as used by BERTScore.
fn idf_table(references: &[Vec<String>]) -> HashMap<String, f64> {
    let mut df: HashMap<&str, usize> = HashMap::new();
    for tokens in references {
        let mut seen: Vec<&str> = tokens.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let m = references.len() as f64;
    df.into_iter()
        .map(|(t, d)| (t.to_string(), ((m + 1.0) / (d as f64 + 1.0)).ln()))
        .collect()
}

/// Scores every summary against its judgment's gold text.
///
/// Summaries without a gold (or with an empty one) are excluded and
/// reported. Empty candidates score 0 on every metric.
pub fn score_corpus(
    summaries: &[SummaryRecord],
    golds: &BTreeMap<String, String>,
    config: &MetricsConfig,
    embeddings: Option<&dyn EmbeddingProvider>,
) -> Result<MetricReport, MetricError> {
    let mut excluded = Vec::new();
    let mut scoreable: Vec<(&SummaryRecord, &str)> = Vec::new();
    for s in summaries {
        match golds.get(&s.judgment_id) {
            Some(g) if !g.trim().is_empty() => scoreable.push((s, g.as_str())),
            Some(_) => excluded.push(ExcludedSummary {
                judgment_id: s.judgment_id.clone(),
                approach: s.approach,
                reason: "empty gold".into(),
            }),
            None => excluded.push(ExcludedSummary {
                judgment_id: s.judgment_id.clone(),
                approach: s.approach,
                reason: "no gold".into(),
            }),
        }
    }
    if scoreable.is_empty() {
        return Err(MetricError::NothingToScore);
    }

    let mut per_summary: Vec<ScoreRow> = scoreable
        .par_iter()
        .flat_map_iter(|(s, gold)| {
            let cand = tokenize(&s.text).tokens;
            let refs = tokenize(gold).tokens;
            config
                .metrics
                .iter()
                .filter_map(|&metric| {
                    let prf = match metric {
                        Metric::Rouge1 => rouge_n(&cand, &refs, 1).expect("order 1"),
                        Metric::Rouge2 => rouge_n(&cand, &refs, 2).expect("order 2"),
                        Metric::RougeL => rouge_l(&cand, &refs),
                        Metric::BertScore => return None,
                    };
                    Some(row(s, metric, prf))
                })
                .collect::<Vec<_>>()
        })
        .collect();

    if config.metrics.contains(&Metric::BertScore) {
        let provider = embeddings.ok_or(MetricError::NoEmbeddingProvider)?;
        per_summary.extend(bertscore_rows(&scoreable, provider, config.bertscore)?);
    }

    per_summary.sort_by(|a, b| {
        (&a.judgment_id, a.approach, a.metric).cmp(&(&b.judgment_id, b.approach, b.metric))
    });
    let corpus = MetricReport::aggregate(&per_summary);
    Ok(MetricReport {
        per_summary,
        corpus,
        excluded,
    })
}

fn row(s: &SummaryRecord, metric: Metric, prf: Prf) -> ScoreRow {
    ScoreRow {
        judgment_id: s.judgment_id.clone(),
        approach: s.approach,
        metric,
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
    }
}

fn bertscore_rows(
    scoreable: &[(&SummaryRecord, &str)],
    provider: &dyn EmbeddingProvider,
    options: BertScoreOptions,
) -> Result<Vec<ScoreRow>, MetricError> {
    let cand_texts: Vec<&str> = scoreable.iter().map(|(s, _)| s.text.as_str()).collect();
    let ref_texts: Vec<&str> = scoreable.iter().map(|(_, g)| *g).collect();
    let cand_emb = provider.embed(&cand_texts)?;
    let ref_emb = provider.embed(&ref_texts)?;
    for (got, expected) in [(cand_emb.len(), cand_texts.len()), (ref_emb.len(), ref_texts.len())] {
        if got != expected {
            return Err(EmbedError::CountMismatch { expected, got }.into());
        }
    }

    let idf = options.idf.then(|| {
        let refs: Vec<Vec<String>> = ref_texts.iter().map(|t| tokenize(t).tokens).collect();
        idf_table(&refs)
    });
    let weights = |text: &str, vectors: usize| -> Result<Option<Vec<f64>>, MetricError> {
        let Some(table) = &idf else { return Ok(None) };
        let tokens = tokenize(text).tokens;
        if tokens.len() != vectors {
            return Err(MetricError::IdfAlignment {
                tokens: tokens.len(),
                vectors,
            });
        }
        let max_idf = ((ref_texts.len() as f64) + 1.0).ln();
        Ok(Some(tokens.iter().map(|t| table.get(t).copied().unwrap_or(max_idf)).collect()))
    };

    let mut rows = Vec::with_capacity(scoreable.len());
    for (i, (s, gold)) in scoreable.iter().enumerate() {
        let prf = if cand_emb[i].is_empty() || ref_emb[i].is_empty() {
            Prf::default()
        } else {
            let cw = weights(&s.text, cand_emb[i].len())?;
            let rw = weights(gold, ref_emb[i].len())?;
            bertscore_weighted(&cand_emb[i], cw.as_deref(), &ref_emb[i], rw.as_deref(), options.rescale_baseline)?
        };
        rows.push(row(s, Metric::BertScore, prf));
    }
    Ok(rows)
}
