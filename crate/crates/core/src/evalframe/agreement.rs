use std::collections::BTreeMap;

use serde::Serialize;

use super::{ClassVerdict, EvalError, SummaryRef, VerdictStore, CLASS_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kappa {
    pub kappa: f64,
    /// Mean per-unit agreement P̄o.
    pub observed: f64,
    /// Chance agreement P̄e.
    pub expected: f64,
    pub units: usize,
    pub raters: usize,
}

/// Fleiss' kappa over `units`, each a vector of per-category rating counts
/// summing to `raters`.
///
/// If chance agreement is 1 (every rating fell into one category) kappa is
/// defined as 1.
pub fn fleiss_kappa(units: &[Vec<usize>], raters: usize) -> Result<Kappa, EvalError> {
    if raters < 2 {
        return Err(EvalError::TooFewRaters);
    }
    let Some(first) = units.first() else {
        return Err(EvalError::NoUnits);
    };
    let k = first.len();
    let n = raters as f64;
    let mut totals = vec![0usize; k];
    let mut p_sum = 0.0;
    for (i, unit) in units.iter().enumerate() {
        if unit.len() != k {
            return Err(EvalError::RaggedUnits {
                unit: i,
                expected: k,
                found: unit.len(),
            });
        }
        let sum: usize = unit.iter().sum();
        if sum != raters {
            return Err(EvalError::RaggedUnits {
                unit: i,
                expected: raters,
                found: sum,
            });
        }
        let sq: usize = unit.iter().map(|c| c * c).sum();
        p_sum += (sq - raters) as f64 / (n * (n - 1.0));
        for (t, c) in totals.iter_mut().zip(unit) {
            *t += c;
        }
    }
    let big_n = units.len() as f64;
    let observed = p_sum / big_n;
    let expected: f64 = totals
        .iter()
        .map(|&t| {
            let p = t as f64 / (big_n * n);
            p * p
        })
        .sum();
    let kappa = if expected >= 1.0 {
        1.0
    } else {
        (observed - expected) / (1.0 - expected)
    };
    Ok(Kappa {
        kappa,
        observed,
        expected,
        units: units.len(),
        raters,
    })
}

fn binary_unit(decisions: impl Iterator<Item = bool>) -> Vec<usize> {
    let mut unit = vec![0, 0];
    for d in decisions {
        unit[usize::from(!d)] += 1;
    }
    unit
}

/// Pairwise agreement between reviewers. One unit is one (summary, class)
/// decision that both reviewers made; kappa is Fleiss with two raters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseKappa {
    pub reviewers: Vec<String>,
    /// `kappa[i][j]`; `None` where the pair shares no summary. Diagonal 1.
    pub kappa: Vec<Vec<Option<f64>>>,
    /// Number of shared summaries per pair.
    pub shared: Vec<Vec<usize>>,
    pub absent: Vec<(String, String)>,
}

impl PairwiseKappa {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.reviewers.iter().position(|r| r == a)?;
        let j = self.reviewers.iter().position(|r| r == b)?;
        self.kappa[i][j]
    }

    /// Mean over the present off-diagonal pairs.
    pub fn mean(&self) -> Option<f64> {
        let vals: Vec<f64> = (0..self.reviewers.len())
            .flat_map(|i| (i + 1..self.reviewers.len()).filter_map(move |j| self.kappa[i][j]))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn pairwise_over(
    store: &VerdictStore,
    classes: &[usize],
    include: impl Fn(&SummaryRef) -> bool,
) -> PairwiseKappa {
    let reviewers: Vec<String> = store.reviewers().into_iter().map(String::from).collect();
    let mut by_reviewer: BTreeMap<&str, BTreeMap<SummaryRef, &ClassVerdict>> = BTreeMap::new();
    for v in store.iter() {
        if include(&v.summary()) {
            by_reviewer.entry(&v.reviewer).or_default().insert(v.summary(), v);
        }
    }
    let r = reviewers.len();
    let mut kappa = vec![vec![None; r]; r];
    let mut shared = vec![vec![0; r]; r];
    let mut absent = Vec::new();
    let empty = BTreeMap::new();
    for i in 0..r {
        let vi = by_reviewer.get(reviewers[i].as_str()).unwrap_or(&empty);
        kappa[i][i] = Some(1.0);
        shared[i][i] = vi.len();
        for j in i + 1..r {
            let vj = by_reviewer.get(reviewers[j].as_str()).unwrap_or(&empty);
            let mut units = Vec::new();
            let mut count = 0;
            for (s, a) in vi {
                if let Some(b) = vj.get(s) {
                    count += 1;
                    for &c in classes {
                        units.push(binary_unit([a.decision(c), b.decision(c)].into_iter()));
                    }
                }
            }
            shared[i][j] = count;
            shared[j][i] = count;
            match fleiss_kappa(&units, 2) {
                Ok(k) => {
                    kappa[i][j] = Some(k.kappa);
                    kappa[j][i] = Some(k.kappa);
                }
                Err(_) => absent.push((reviewers[i].clone(), reviewers[j].clone())),
            }
        }
    }
    PairwiseKappa {
        reviewers,
        kappa,
        shared,
        absent,
    }
}

/// Reviewer × reviewer agreement over all seven classes.
pub fn pairwise_kappa_matrix(store: &VerdictStore) -> PairwiseKappa {
    let classes: Vec<usize> = (1..=CLASS_COUNT).collect();
    pairwise_over(store, &classes, |_| true)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAgreement {
    pub class: usize,
    /// Multi-rater kappa with summaries as units; `None` without summaries.
    pub kappa: Option<Kappa>,
    /// Mean of the pairwise two-rater kappas restricted to this class.
    pub pairwise_mean: Option<f64>,
    pub fulfilled: usize,
    pub not_fulfilled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerClassReport {
    pub per_item: usize,
    pub summaries: usize,
    pub classes: Vec<ClassAgreement>,
    /// Summaries skipped because they did not have exactly `per_item`
    /// verdicts, with the count they had.
    pub excluded: Vec<(SummaryRef, usize)>,
}

/// Per-class agreement over summaries carrying exactly `per_item` verdicts.
pub fn per_class_kappa(store: &VerdictStore, per_item: usize) -> Result<PerClassReport, EvalError> {
    if per_item < 2 {
        return Err(EvalError::TooFewRaters);
    }
    let mut complete: BTreeMap<SummaryRef, Vec<&ClassVerdict>> = BTreeMap::new();
    let mut excluded = Vec::new();
    for (s, vs) in store.by_summary() {
        if vs.len() == per_item {
            complete.insert(s, vs);
        } else {
            excluded.push((s, vs.len()));
        }
    }
    let mut classes = Vec::with_capacity(CLASS_COUNT);
    for class in 1..=CLASS_COUNT {
        let units: Vec<Vec<usize>> = complete
            .values()
            .map(|vs| binary_unit(vs.iter().map(|v| v.decision(class))))
            .collect();
        let fulfilled: usize = units.iter().map(|u| u[0]).sum();
        let not_fulfilled: usize = units.iter().map(|u| u[1]).sum();
        let kappa = match fleiss_kappa(&units, per_item) {
            Ok(k) => Some(k),
            Err(EvalError::NoUnits) => None,
            Err(e) => return Err(e),
        };
        let pairwise_mean = pairwise_over(store, &[class], |s| complete.contains_key(s)).mean();
        classes.push(ClassAgreement {
            class,
            kappa,
            pairwise_mean,
            fulfilled,
            not_fulfilled,
        });
    }
    Ok(PerClassReport {
        per_item,
        summaries: complete.len(),
        classes,
        excluded,
    })
}
