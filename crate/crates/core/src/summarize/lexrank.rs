use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Approach, SummarizeError, SummaryRecord};
use crate::textproc::{count_tokens, tokenize, Sentence, SentenceSplitter, TokenCounter};

/// Scores closer than this count as tied and fall back to document order.
const TIE_EPSILON: f64 = 1e-9;

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        SquareMatrix {
            n,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

fn term_counts(tokens: &[String]) -> HashMap<&str, f64> {
    let mut tf = HashMap::new();
    for t in tokens {
        *tf.entry(t.as_str()).or_insert(0.0) += 1.0;
    }
    tf
}

fn cosine(a: &HashMap<&str, f64>, b: &HashMap<&str, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(t, x)| b.get(t).map(|y| x * y)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// Cosine similarity of TF-IDF sentence vectors, with `idf = ln(N / df)`
/// computed over the given sentences. The diagonal is 1.
///
/// When every term of both sentences occurs in all sentences their TF-IDF
/// vectors vanish; such pairs fall back to the cosine of raw term counts so
/// that repeated sentences still link up.
pub fn tfidf_similarity(sentences: &[Vec<String>]) -> SquareMatrix {
    let n = sentences.len();
    let tfs: Vec<HashMap<&str, f64>> = sentences.iter().map(|s| term_counts(s)).collect();
    let mut df: HashMap<&str, f64> = HashMap::new();
    for tf in &tfs {
        for t in tf.keys() {
            *df.entry(t).or_insert(0.0) += 1.0;
        }
    }
    let weighted: Vec<HashMap<&str, f64>> = tfs
        .iter()
        .map(|tf| {
            tf.iter()
                .map(|(t, c)| (*t, c * (n as f64 / df[t]).ln()))
                .filter(|(_, w)| *w != 0.0)
                .collect()
        })
        .collect();
    let mut m = SquareMatrix::zeros(n);
    for i in 0..n {
        m.set(i, i, 1.0);
        for j in (i + 1)..n {
            let sim = if weighted[i].is_empty() && weighted[j].is_empty() {
                cosine(&tfs[i], &tfs[j])
            } else {
                cosine(&weighted[i], &weighted[j])
            };
            m.set(i, j, sim);
            m.set(j, i, sim);
        }
    }
    m
}

/// Row-stochastic transition matrix of the thresholded similarity graph.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix(SquareMatrix);

impl StochasticMatrix {
    /// Links distinct sentences whose similarity reaches `threshold` and
    /// normalizes each row by its degree. A sentence without links gets a
    /// uniform row.
    pub fn from_similarities(similarity: &SquareMatrix, threshold: f64) -> Self {
        let n = similarity.size();
        let mut m = SquareMatrix::zeros(n);
        for i in 0..n {
            let links: Vec<usize> = (0..n).filter(|&j| j != i && similarity.get(i, j) >= threshold).collect();
            if links.is_empty() {
                for j in 0..n {
                    m.set(i, j, 1.0 / n as f64);
                }
            } else {
                let w = 1.0 / links.len() as f64;
                for j in links {
                    m.set(i, j, w);
                }
            }
        }
        StochasticMatrix(m)
    }

    /// Wraps a matrix whose rows already sum to 1.
    pub fn from_matrix(matrix: SquareMatrix) -> Self {
        StochasticMatrix(matrix)
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.0
    }
}

/// Stationary scores of the damped random walk; non-negative, summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityVector {
    pub scores: Vec<f64>,
}

/// Iterates `x ← d·Mᵀx + (1 − d)/N` from the uniform vector until the
/// largest componentwise change drops below `tolerance`.
pub fn power_iteration(
    transition: &StochasticMatrix,
    damping: f64,
    tolerance: f64,
    max_iters: usize,
) -> Result<CentralityVector, SummarizeError> {
    if !(damping > 0.0 && damping < 1.0) {
        return Err(SummarizeError::InvalidDamping(damping));
    }
    let m = transition.matrix();
    let n = m.size();
    if n == 0 {
        return Err(SummarizeError::EmptyDocument);
    }
    let teleport = (1.0 - damping) / n as f64;
    let mut x = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let mut next = vec![teleport; n];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (nj, &mij) in next.iter_mut().zip(m.row(i)) {
                *nj += damping * mij * xi;
            }
        }
        residual = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if residual < tolerance {
            let total: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= total);
            return Ok(CentralityVector { scores: x });
        }
    }
    Err(SummarizeError::NoConvergence {
        iterations: max_iters,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexRankParams {
    /// Number of sentences to extract.
    pub k: usize,
    pub threshold: f64,
    pub damping: f64,
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for LexRankParams {
    fn default() -> Self {
        LexRankParams {
            k: 2,
            threshold: 0.1,
            damping: 0.85,
            tolerance: 1e-10,
            max_iters: 200,
        }
    }
}

/// Sentences selected by LexRank, in document order.
#[derive(Debug, Clone, PartialEq)]
pub struct Extract {
    /// Candidate sentences (those containing at least one word).
    pub sentences: Vec<Sentence>,
    pub centrality: CentralityVector,
    /// Indices into `sentences`, ascending.
    pub selected: Vec<usize>,
}

impl Extract {
    pub fn text(&self) -> String {
        self.selected
            .iter()
            .map(|&i| self.sentences[i].text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Picks the `k` highest scores; near-ties go to the earlier index. Returned
/// indices are ascending.
pub fn top_k_by_score(scores: &[f64], k: usize) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..scores.len()).collect();
    let mut chosen = Vec::with_capacity(k.min(scores.len()));
    while chosen.len() < k && !remaining.is_empty() {
        let best = remaining.iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
        let pos = remaining
            .iter()
            .position(|&i| scores[i] >= best - TIE_EPSILON)
            .expect("maximum exists");
        chosen.push(remaining.remove(pos));
    }
    chosen.sort_unstable();
    chosen
}

#[derive(Debug, Clone, Default)]
pub struct LexRank {
    pub params: LexRankParams,
    pub splitter: SentenceSplitter,
}

impl LexRank {
    pub fn new(params: LexRankParams) -> Self {
        LexRank {
            params,
            splitter: SentenceSplitter::default(),
        }
    }

    /// Ranks already segmented sentences.
    pub fn rank_sentences(&self, sentences: Vec<Sentence>) -> Result<Extract, SummarizeError> {
        if self.params.k == 0 {
            return Err(SummarizeError::ZeroLength);
        }
        let tokens: Vec<Vec<String>> = sentences.iter().map(|s| tokenize(&s.text).tokens).collect();
        let (sentences, tokens): (Vec<Sentence>, Vec<Vec<String>>) = sentences
            .into_iter()
            .zip(tokens)
            .filter(|(_, t)| t.iter().any(|w| w.starts_with(char::is_alphanumeric)))
            .unzip();
        if sentences.is_empty() {
            return Err(SummarizeError::EmptyDocument);
        }
        let similarity = tfidf_similarity(&tokens);
        let transition = StochasticMatrix::from_similarities(&similarity, self.params.threshold);
        let centrality = power_iteration(
            &transition,
            self.params.damping,
            self.params.tolerance,
            self.params.max_iters,
        )?;
        let selected = top_k_by_score(&centrality.scores, self.params.k);
        Ok(Extract {
            sentences,
            centrality,
            selected,
        })
    }

    pub fn extract(&self, text: &str) -> Result<Extract, SummarizeError> {
        self.rank_sentences(self.splitter.split(text).sentences)
    }
}

/// LexRank summary of `text` as a [`SummaryRecord`].
pub fn lexrank_summary(
    judgment_id: &str,
    text: &str,
    lexrank: &LexRank,
    counter: &dyn TokenCounter,
) -> Result<SummaryRecord, SummarizeError> {
    let extract = lexrank.extract(text)?;
    let summary = extract.text();
    Ok(SummaryRecord {
        judgment_id: judgment_id.to_string(),
        approach: Approach::Lexrank,
        token_count: count_tokens(&summary, counter)?,
        sentence_count: extract.selected.len(),
        text: summary,
        generation_params: None,
        empty: false,
        failure: None,
    })
}
