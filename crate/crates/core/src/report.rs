//! CSV layouts for the length, score, agreement, fulfillment, correlation and
//! entity-audit tables. Floats are written with four decimals; the JSON
//! artifacts next to them keep full precision.

use std::io::Write;

use serde::Serialize;

use crate::corpus::LengthStats;
use crate::evalframe::{
    landis_band, CorrelationRow, FulfillmentReport, PairwiseKappa, PerClassReport, CLASS_COUNT, EVAL_CLASSES,
};
use crate::metrics::{AggregateRow, ScoreRow};
use crate::summarize::Approach;

/// Written into the pairwise agreement artifacts.
pub const PAIRWISE_UNIT: &str = "one (summary, class) binary decision rated by both reviewers; Fleiss kappa with n=2";

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

fn opt4(v: Option<f64>) -> String {
    v.map(f4).unwrap_or_default()
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> csv::Result<()> {
    w.flush()?;
    Ok(())
}

/// Renders any of the `write_*` functions into a string.
pub fn to_csv_string(write: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> csv::Result<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

/// One row of the length table: a text kind ("reasons" or
/// "guiding_principles") on one split ("all", "train", ...).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthRow {
    pub text: String,
    pub split: String,
    pub count: usize,
    pub stats: Option<LengthStats>,
}

pub fn write_length_csv<W: Write>(out: W, rows: &[LengthRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["text", "split", "count", "min", "mean", "max", "std"])?;
    for r in rows {
        let (min, mean, max, std) = match &r.stats {
            Some(s) => (s.min.to_string(), format!("{:.2}", s.mean), s.max.to_string(), format!("{:.2}", s.std)),
            None => Default::default(),
        };
        w.write_record([r.text.clone(), r.split.clone(), r.count.to_string(), min, mean, max, std])?;
    }
    finish(w)
}

/// Corpus-level score table: one row per (metric, approach) with the F-score
/// distribution.
pub fn write_scores_csv<W: Write>(out: W, rows: &[AggregateRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "approach", "count", "min", "mean", "max", "std"])?;
    for r in rows {
        w.write_record([
            r.metric.as_str().to_string(),
            r.approach.as_str().to_string(),
            r.stats.count.to_string(),
            f4(r.stats.min),
            f4(r.stats.mean),
            f4(r.stats.max),
            f4(r.stats.std),
        ])?;
    }
    finish(w)
}

pub fn write_per_summary_csv<W: Write>(out: W, rows: &[ScoreRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["judgment_id", "approach", "metric", "precision", "recall", "f1"])?;
    for r in rows {
        w.write_record([
            r.judgment_id.clone(),
            r.approach.as_str().to_string(),
            r.metric.as_str().to_string(),
            f4(r.precision),
            f4(r.recall),
            f4(r.f1),
        ])?;
    }
    finish(w)
}

/// Square reviewer matrix; absent pairs are left blank.
pub fn write_pairwise_csv<W: Write>(out: W, m: &PairwiseKappa) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["reviewer".to_string()];
    header.extend(m.reviewers.iter().cloned());
    w.write_record(&header)?;
    for (i, r) in m.reviewers.iter().enumerate() {
        let mut row = vec![r.clone()];
        row.extend(m.kappa[i].iter().map(|k| opt4(*k)));
        w.write_record(&row)?;
    }
    finish(w)
}

pub fn write_per_class_csv<W: Write>(out: W, rep: &PerClassReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "class",
        "aspect",
        "kappa",
        "observed",
        "expected",
        "band",
        "pairwise_mean_kappa",
        "fulfilled",
        "not_fulfilled",
    ])?;
    for c in &rep.classes {
        let k = c.kappa.as_ref();
        w.write_record([
            c.class.to_string(),
            EVAL_CLASSES[c.class - 1].aspect.to_string(),
            opt4(k.map(|k| k.kappa)),
            opt4(k.map(|k| k.observed)),
            opt4(k.map(|k| k.expected)),
            k.and_then(|k| landis_band(k.kappa).ok()).map(|b| b.label().to_string()).unwrap_or_default(),
            opt4(c.pairwise_mean),
            c.fulfilled.to_string(),
            c.not_fulfilled.to_string(),
        ])?;
    }
    finish(w)
}

/// Rows per approach, one column per class plus the mean number of
/// fulfilled classes.
pub fn write_fulfillment_csv<W: Write>(out: W, rep: &FulfillmentReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["approach".to_string(), "judgments".to_string()];
    header.extend((1..=CLASS_COUNT).map(|c| format!("class_{c}")));
    header.push("mean_classes".to_string());
    w.write_record(&header)?;
    for r in &rep.rows {
        let mut row = vec![r.approach.as_str().to_string(), r.judgments.to_string()];
        row.extend(r.rates.iter().map(|&v| f4(v)));
        row.push(f4(r.mean_classes));
        w.write_record(&row)?;
    }
    finish(w)
}

pub fn write_correlations_csv<W: Write>(out: W, rows: &[CorrelationRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "component", "class", "n", "rho", "band", "note"])?;
    for r in rows {
        w.write_record([
            r.metric.as_str().to_string(),
            r.component.as_str().to_string(),
            r.class.to_string(),
            r.n.to_string(),
            opt4(r.rho),
            r.band.map(|b| b.label().to_string()).unwrap_or_default(),
            r.note.clone().unwrap_or_default(),
        ])?;
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub judgment_id: String,
    pub approach: Approach,
    pub generated: usize,
    pub supported: usize,
    pub support_rate: f64,
    pub unsupported: Vec<String>,
}

pub fn write_audit_csv<W: Write>(out: W, rows: &[AuditRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["judgment_id", "approach", "generated", "supported", "support_rate", "unsupported"])?;
    for r in rows {
        w.write_record([
            r.judgment_id.clone(),
            r.approach.as_str().to_string(),
            r.generated.to_string(),
            r.supported.to_string(),
            f4(r.support_rate),
            r.unsupported.join("; "),
        ])?;
    }
    finish(w)
}
