//! Slow, obviously-correct reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

pub fn prf(matches: usize, cand_total: usize, ref_total: usize) -> (f64, f64, f64) {
    let p = if cand_total == 0 { 0.0 } else { matches as f64 / cand_total as f64 };
    let r = if ref_total == 0 { 0.0 } else { matches as f64 / ref_total as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Clipped n-gram overlap by linear scans over explicit windows.
pub fn rouge_n(cand: &[String], refs: &[String], n: usize) -> (f64, f64, f64) {
    let windows = |t: &[String]| -> Vec<Vec<String>> {
        if t.len() < n {
            Vec::new()
        } else {
            (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
        }
    };
    let cw = windows(cand);
    let mut rw = windows(refs);
    let mut matches = 0;
    for g in &cw {
        if let Some(pos) = rw.iter().position(|r| r == g) {
            rw.remove(pos);
            matches += 1;
        }
    }
    let rt = windows(refs).len();
    prf(matches, cw.len(), rt)
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == *n))
}

/// Longest common subsequence by enumerating every subsequence of `a`.
pub fn lcs_exhaustive(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 16, "exhaustive enumeration only for short inputs");
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let size = mask.count_ones() as usize;
        if size <= best {
            continue;
        }
        let sub: Vec<&String> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        if is_subsequence(&sub, b) {
            best = size;
        }
    }
    best
}

pub fn rouge_l(cand: &[String], refs: &[String]) -> (f64, f64, f64) {
    prf(lcs_exhaustive(cand, refs), cand.len(), refs.len())
}

/// BERTScore greedy matching with a plain double loop over unit vectors.
pub fn bertscore(cand: &[Vec<f64>], refs: &[Vec<f64>]) -> (f64, f64, f64) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut recall = 0.0;
    for r in refs {
        let mut best = f64::NEG_INFINITY;
        for c in cand {
            best = best.max(dot(r, c));
        }
        recall += best;
    }
    recall /= refs.len() as f64;
    let mut precision = 0.0;
    for c in cand {
        let mut best = f64::NEG_INFINITY;
        for r in refs {
            best = best.max(dot(r, c));
        }
        precision += best;
    }
    precision /= cand.len() as f64;
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f)
}

/// TF-IDF cosine matrix (idf = ln(N/df)); pairs whose weighted vectors both
/// vanish fall back to raw counts.
pub fn tfidf_matrix(sentences: &[Vec<String>]) -> DMatrix<f64> {
    let n = sentences.len();
    let mut vocab: BTreeMap<&str, usize> = BTreeMap::new();
    for s in sentences {
        for t in s {
            let k = vocab.len();
            vocab.entry(t).or_insert(k);
        }
    }
    let v = vocab.len();
    let mut tf = DMatrix::<f64>::zeros(n, v);
    for (i, s) in sentences.iter().enumerate() {
        for t in s {
            tf[(i, vocab[t.as_str()])] += 1.0;
        }
    }
    let mut w = tf.clone();
    for j in 0..v {
        let df = (0..n).filter(|&i| tf[(i, j)] > 0.0).count() as f64;
        let idf = (n as f64 / df).ln();
        for i in 0..n {
            w[(i, j)] *= idf;
        }
    }
    let cos = |m: &DMatrix<f64>, i: usize, j: usize| {
        let a = m.row(i);
        let b = m.row(j);
        let (na, nb) = (a.norm(), b.norm());
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            (a.dot(&b) / (na * nb)).clamp(0.0, 1.0)
        }
    };
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if w.row(i).norm() == 0.0 && w.row(j).norm() == 0.0 {
            cos(&tf, i, j)
        } else {
            cos(&w, i, j)
        }
    })
}

/// Stationary vector of the damped walk over the thresholded graph, by a
/// direct LU solve of (I − d·Mᵀ)x = (1 − d)/N.
pub fn lexrank_centrality(sentences: &[Vec<String>], threshold: f64, damping: f64) -> Vec<f64> {
    let n = sentences.len();
    let sim = tfidf_matrix(sentences);
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let links: Vec<usize> = (0..n).filter(|&j| j != i && sim[(i, j)] >= threshold).collect();
        if links.is_empty() {
            for j in 0..n {
                m[(i, j)] = 1.0 / n as f64;
            }
        } else {
            for &j in &links {
                m[(i, j)] = 1.0 / links.len() as f64;
            }
        }
    }
    let a = DMatrix::<f64>::identity(n, n) - m.transpose() * damping;
    let b = DVector::<f64>::from_element(n, (1.0 - damping) / n as f64);
    let x = a.lu().solve(&b).expect("I - dMᵀ is nonsingular for d < 1");
    let total = x.sum();
    x.iter().map(|v| v / total).collect()
}

/// Indices of the k largest scores, ties (within 1e-9) to the earlier one,
/// returned ascending. Sentence i is chosen iff fewer than k sentences beat it.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    (0..scores.len())
        .filter(|&i| {
            let beaten_by = (0..scores.len())
                .filter(|&j| scores[j] > scores[i] + 1e-9 || (j < i && (scores[j] - scores[i]).abs() <= 1e-9))
                .count();
            beaten_by < k
        })
        .collect()
}
