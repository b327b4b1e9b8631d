//! Caption overlap metrics over a fixed tokenisation: lowercase, every
//! non-alphanumeric character becomes a space, split on whitespace.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_N: usize = 4;
const ROUGE_BETA: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionPair {
    pub item_id: String,
    pub candidate: String,
    pub references: Vec<String>,
}

impl CaptionPair {
    pub fn new(
        item_id: impl Into<String>,
        candidate: impl Into<String>,
        references: Vec<String>,
    ) -> Result<Self> {
        if references.is_empty() {
            return Err(Error::argument("caption pair needs at least one reference"));
        }
        Ok(Self {
            item_id: item_id.into(),
            candidate: candidate.into(),
            references,
        })
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

type Counts<'a> = HashMap<&'a [String], usize>;

fn ngram_counts(tokens: &[String], n: usize) -> Counts<'_> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU-4 with uniform weights and brevity penalty against the
/// closest reference length. For n ≥ 2 a zero match count is smoothed to
/// `1 / (total + 1)`; a zero unigram match gives 0.
pub fn bleu4(pair: &CaptionPair) -> f64 {
    let cand = tokenize(&pair.candidate);
    if cand.is_empty() {
        return 0.0;
    }
    let refs: Vec<Vec<String>> = pair.references.iter().map(|r| tokenize(r)).collect();

    let mut log_sum = 0.0;
    for n in 1..=MAX_N {
        let cand_counts = ngram_counts(&cand, n);
        let mut max_ref: Counts = HashMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let matched: usize = cand_counts
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total: usize = cand_counts.values().sum();
        let precision = match (matched, n) {
            (0, 1) => return 0.0,
            (0, _) => 1.0 / (total as f64 + 1.0),
            _ => matched as f64 / total as f64,
        };
        log_sum += precision.ln() / MAX_N as f64;
    }

    let c = cand.len();
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let brevity = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    brevity * log_sum.exp()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure with β = 1.2, best over references.
pub fn rouge_l(pair: &CaptionPair) -> f64 {
    let cand = tokenize(&pair.candidate);
    if cand.is_empty() {
        return 0.0;
    }
    pair.references
        .iter()
        .map(|r| {
            let r = tokenize(r);
            let l = lcs_len(&cand, &r);
            if l == 0 {
                return 0.0;
            }
            let p = l as f64 / cand.len() as f64;
            let rec = l as f64 / r.len() as f64;
            let b2 = ROUGE_BETA * ROUGE_BETA;
            (1.0 + b2) * p * rec / (rec + b2 * p)
        })
        .fold(0.0, f64::max)
}

/// Exact-match METEOR: `Fmean · (1 − 0.5·(chunks/matches)³)` with
/// `Fmean = 10PR / (R + 9P)`, best over references. No stemming or synonyms.
pub fn meteor_exact(pair: &CaptionPair) -> f64 {
    let cand = tokenize(&pair.candidate);
    pair.references
        .iter()
        .map(|r| meteor_single(&cand, &tokenize(r)))
        .fold(0.0, f64::max)
}

fn meteor_single(cand: &[String], reference: &[String]) -> f64 {
    let alignment = align_exact(cand, reference);
    let matches = alignment.len();
    if matches == 0 {
        return 0.0;
    }
    let p = matches as f64 / cand.len() as f64;
    let r = matches as f64 / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(i, j) in &alignment {
        if prev != Some((i.wrapping_sub(1), j.wrapping_sub(1))) {
            chunks += 1;
        }
        prev = Some((i, j));
    }
    let frag = chunks as f64 / matches as f64;
    fmean * (1.0 - 0.5 * frag.powi(3))
}

/// One-to-one exact alignment as `(candidate index, reference index)` pairs,
/// preferring to continue the previous chunk, else the earliest free slot.
fn align_exact(cand: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut used = vec![false; reference.len()];
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (i, w) in cand.iter().enumerate() {
        let continued = out
            .last()
            .filter(|&&(pi, _)| pi + 1 == i)
            .map(|&(_, pj)| pj + 1)
            .filter(|&j| j < reference.len() && !used[j] && &reference[j] == w);
        let slot =
            continued.or_else(|| (0..reference.len()).find(|&j| !used[j] && &reference[j] == w));
        if let Some(j) = slot {
            used[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// Per-item CIDEr over the corpus: TF-IDF n-gram vectors (n = 1..4) with
/// document frequencies from the reference sets, cosine averaged over
/// references and orders, times 10.
pub fn cider_per_item(pairs: &[CaptionPair]) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::argument("CIDEr needs a non-empty corpus"));
    }
    let cands: Vec<Vec<String>> = pairs.iter().map(|p| tokenize(&p.candidate)).collect();
    let refs: Vec<Vec<Vec<String>>> = pairs
        .iter()
        .map(|p| p.references.iter().map(|r| tokenize(r)).collect())
        .collect();

    let mut doc_freq: Vec<HashMap<&[String], usize>> = vec![HashMap::new(); MAX_N + 1];
    for item_refs in &refs {
        for (n, df) in doc_freq.iter_mut().enumerate().skip(1) {
            let seen: HashSet<&[String]> = item_refs
                .iter()
                .flat_map(|r| ngram_counts(r, n).into_keys())
                .collect();
            for g in seen {
                *df.entry(g).or_insert(0) += 1;
            }
        }
    }
    let log_n = (pairs.len() as f64).ln();
    let tfidf = |tokens: &[String], n: usize| -> HashMap<Vec<String>, f64> {
        ngram_counts(tokens, n)
            .into_iter()
            .map(|(g, c)| {
                let df = doc_freq[n].get(g).copied().unwrap_or(0).max(1) as f64;
                (g.to_vec(), c as f64 * (log_n - df.ln()))
            })
            .collect()
    };

    Ok(cands
        .iter()
        .zip(&refs)
        .map(|(cand, item_refs)| {
            let mut score = 0.0;
            for n in 1..=MAX_N {
                let cv = tfidf(cand, n);
                let sims: f64 = item_refs.iter().map(|r| cosine(&cv, &tfidf(r, n))).sum();
                score += sims / item_refs.len() as f64 / MAX_N as f64;
            }
            10.0 * score
        })
        .collect())
}

/// Corpus CIDEr: mean of [`cider_per_item`].
pub fn cider(pairs: &[CaptionPair]) -> Result<f64> {
    let per = cider_per_item(pairs)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

fn cosine(a: &HashMap<Vec<String>, f64>, b: &HashMap<Vec<String>, f64>) -> f64 {
    let norm = |m: &HashMap<Vec<String>, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a
        .iter()
        .map(|(g, v)| v * b.get(g).copied().unwrap_or(0.0))
        .sum();
    dot / (na * nb)
}
