use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{majority_verdict, EvalError, SummaryRef, VerdictStore, CLASS_COUNT};
use crate::metrics::{Metric, MetricReport};

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // Positions i..=j share the mean of ranks i+1..=j+1.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(EvalError::TooShort(x.len()));
    }
    pearson(&average_ranks(x), &average_ranks(y)).ok_or(EvalError::Undefined)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LandisBand {
    Poor,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl LandisBand {
    pub fn label(self) -> &'static str {
        match self {
            LandisBand::Poor => "poor",
            LandisBand::Slight => "slight",
            LandisBand::Fair => "fair",
            LandisBand::Moderate => "moderate",
            LandisBand::Substantial => "substantial",
            LandisBand::AlmostPerfect => "almost perfect",
        }
    }
}

impl fmt::Display for LandisBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CohenBand {
    Negligible,
    Low,
    Medium,
    Large,
}

impl CohenBand {
    pub fn label(self) -> &'static str {
        match self {
            CohenBand::Negligible => "negligible",
            CohenBand::Low => "low",
            CohenBand::Medium => "medium",
            CohenBand::Large => "large",
        }
    }
}

impl fmt::Display for CohenBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn check_range(v: f64) -> Result<(), EvalError> {
    if (-1.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(EvalError::OutOfRange(v))
    }
}

/// Agreement band for a kappa value; upper band edges are inclusive.
pub fn landis_band(kappa: f64) -> Result<LandisBand, EvalError> {
    check_range(kappa)?;
    Ok(match kappa {
        k if k <= 0.0 => LandisBand::Poor,
        k if k <= 0.2 => LandisBand::Slight,
        k if k <= 0.4 => LandisBand::Fair,
        k if k <= 0.6 => LandisBand::Moderate,
        k if k <= 0.8 => LandisBand::Substantial,
        _ => LandisBand::AlmostPerfect,
    })
}

/// Effect-size band for a correlation coefficient, by magnitude.
pub fn cohen_band(rho: f64) -> Result<CohenBand, EvalError> {
    check_range(rho)?;
    Ok(match rho.abs() {
        r if r < 0.1 => CohenBand::Negligible,
        r if r < 0.3 => CohenBand::Low,
        r if r < 0.5 => CohenBand::Medium,
        _ => CohenBand::Large,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreComponent {
    Precision,
    Recall,
}

impl ScoreComponent {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreComponent::Precision => "precision",
            ScoreComponent::Recall => "recall",
        }
    }
}

/// The metric component / evaluation class pairs that are correlated.
pub const CORRELATED_PAIRS: [(ScoreComponent, usize); 3] = [
    (ScoreComponent::Recall, 4),
    (ScoreComponent::Recall, 5),
    (ScoreComponent::Precision, 3),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub metric: Metric,
    pub component: ScoreComponent,
    pub class: usize,
    pub n: usize,
    /// `None` when undefined (constant series or fewer than 3 summaries).
    pub rho: Option<f64>,
    pub band: Option<CohenBand>,
    pub note: Option<String>,
}

/// Spearman correlation between per-summary metric scores and the majority
/// class decision (as 0/1), pooled over every summary that has both.
pub fn metric_class_correlations(report: &MetricReport, store: &VerdictStore, per_item: usize) -> Vec<CorrelationRow> {
    let majorities: BTreeMap<SummaryRef, [bool; CLASS_COUNT]> = store
        .by_summary()
        .into_iter()
        .filter_map(|(s, vs)| {
            let d: Vec<_> = vs.iter().map(|v| v.decisions).collect();
            majority_verdict(&d, per_item).ok().map(|m| (s, m))
        })
        .collect();
    let mut metrics: Vec<Metric> = report.per_summary.iter().map(|r| r.metric).collect();
    metrics.sort();
    metrics.dedup();

    let mut out = Vec::new();
    for metric in metrics {
        for (component, class) in CORRELATED_PAIRS {
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for row in report.per_summary.iter().filter(|r| r.metric == metric) {
                let key = SummaryRef::new(row.judgment_id.clone(), row.approach);
                if let Some(m) = majorities.get(&key) {
                    xs.push(match component {
                        ScoreComponent::Precision => row.precision,
                        ScoreComponent::Recall => row.recall,
                    });
                    ys.push(if m[class - 1] { 1.0 } else { 0.0 });
                }
            }
            let (rho, note) = match spearman(&xs, &ys) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            out.push(CorrelationRow {
                metric,
                component,
                class,
                n: xs.len(),
                rho,
                band: rho.and_then(|r| cohen_band(r).ok()),
                note,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_fixtures() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        let x = [0.3, 0.1, 0.9, 0.5];
        assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((spearman(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_errors() {
        assert_eq!(spearman(&[1.0, 2.0], &[1.0]), Err(EvalError::LengthMismatch(2, 1)));
        assert_eq!(spearman(&[1.0, 2.0], &[1.0, 2.0]), Err(EvalError::TooShort(2)));
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(EvalError::Undefined));
    }

    #[test]
    fn ties_get_mean_rank() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn bands() {
        assert_eq!(landis_band(0.6568).unwrap(), LandisBand::Substantial);
        assert_eq!(landis_band(1.0).unwrap().label(), "almost perfect");
        assert_eq!(landis_band(0.0).unwrap(), LandisBand::Poor);
        assert_eq!(landis_band(0.2).unwrap(), LandisBand::Slight);
        assert_eq!(cohen_band(0.35).unwrap(), CohenBand::Medium);
        assert_eq!(cohen_band(-0.35).unwrap(), CohenBand::Medium);
        assert_eq!(cohen_band(0.1).unwrap(), CohenBand::Low);
        assert_eq!(cohen_band(0.5).unwrap(), CohenBand::Large);
        assert_eq!(landis_band(1.2), Err(EvalError::OutOfRange(1.2)));
        assert!(cohen_band(f64::NAN).is_err());
    }
}
