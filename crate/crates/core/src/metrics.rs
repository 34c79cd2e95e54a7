//! Intrinsic (perplexity, distinct-2) and extrinsic (ROUGE, greedy-matching
//! similarity) text quality metrics.
//!
//! Word tokens: lowercase, split on whitespace, strip leading and trailing
//! non-alphanumeric characters, drop tokens that become empty. Character
//! bigrams are taken over the lowercased text with whitespace runs collapsed
//! to one space and the ends trimmed.

use std::collections::HashMap;
use std::hash::Hash;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::LanguageModel;
use crate::rng::SeededRng;

pub fn word_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

pub fn normalize_chars(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn distinct_ratio<T: Eq + Hash>(bigrams: Vec<(T, T)>) -> f64 {
    if bigrams.is_empty() {
        return 1.0;
    }
    let total = bigrams.len();
    let unique: std::collections::HashSet<_> = bigrams.into_iter().collect();
    unique.len() as f64 / total as f64
}

/// Unique word bigrams over total word bigrams; 1.0 below two words.
pub fn distinct2_word(text: &str) -> f64 {
    let w = word_tokens(text);
    distinct_ratio(w.windows(2).map(|p| (p[0].clone(), p[1].clone())).collect())
}

/// Unique character bigrams over total character bigrams; 1.0 below two characters.
pub fn distinct2_char(text: &str) -> f64 {
    let c: Vec<char> = normalize_chars(text).chars().collect();
    distinct_ratio(c.windows(2).map(|p| (p[0], p[1])).collect())
}

/// `exp(−mean log p)` over the predicted positions of `text` under `scorer`.
pub fn perplexity(text: &str, scorer: &dyn LanguageModel) -> Result<f64> {
    let tokens = scorer.tokenize(text);
    let lp = scorer.sequence_logprob(&tokens)?;
    let mean = lp.iter().sum::<f64>() / lp.len() as f64;
    Ok((-mean).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicReport {
    pub perplexity: f64,
    pub distinct2_word: f64,
    pub distinct2_char: f64,
}

pub fn intrinsic_report(text: &str, scorer: &dyn LanguageModel) -> Result<IntrinsicReport> {
    Ok(IntrinsicReport {
        perplexity: perplexity(text, scorer)?,
        distinct2_word: distinct2_word(text),
        distinct2_char: distinct2_char(text),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeTriple {
    pub const ZERO: RougeTriple = RougeTriple {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }

    fn from_counts(overlap: usize, cand: usize, reference: usize) -> Self {
        if cand == 0 || reference == 0 {
            return Self::ZERO;
        }
        Self::from_pr(overlap as f64 / cand as f64, overlap as f64 / reference as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RougeOptions {
    /// Porter-stem tokens before matching.
    pub stem: bool,
}

fn rouge_tokens(text: &str, opts: RougeOptions) -> Vec<String> {
    let toks = word_tokens(text);
    if !opts.stem {
        return toks;
    }
    let stemmer = Stemmer::create(Algorithm::English);
    toks.iter().map(|t| stemmer.stem(t).into_owned()).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if n == 0 {
        return m;
    }
    for g in tokens.windows(n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Overlap of clipped n-gram counts.
pub fn rouge_n_tokens(cand: &[String], reference: &[String], n: usize) -> RougeTriple {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let overlap = c
        .iter()
        .map(|(g, k)| (*k).min(r.get(g).copied().unwrap_or(0)))
        .sum();
    RougeTriple::from_counts(overlap, c.values().sum(), r.values().sum())
}

pub fn rouge_n(candidate: &str, reference: &str, n: usize, opts: RougeOptions) -> RougeTriple {
    rouge_n_tokens(&rouge_tokens(candidate, opts), &rouge_tokens(reference, opts), n)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l_tokens(cand: &[String], reference: &[String]) -> RougeTriple {
    RougeTriple::from_counts(lcs_len(cand, reference), cand.len(), reference.len())
}

pub fn rouge_l(candidate: &str, reference: &str, opts: RougeOptions) -> RougeTriple {
    rouge_l_tokens(&rouge_tokens(candidate, opts), &rouge_tokens(reference, opts))
}

/// Per-token vectors for a text.
pub trait TokenEmbedder: Send + Sync {
    fn name(&self) -> &str;
    fn embed(&self, text: &str) -> Result<Vec<Vec<f64>>>;
}

/// Static token vectors seeded from the SHA-256 of each word token. Offline
/// stand-in for contextual embedders: equal words get equal vectors and
/// distinct words get nearly orthogonal ones.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        Self { dim }
    }

    pub fn vector(&self, token: &str) -> Vec<f64> {
        let digest = Sha256::digest(token.as_bytes());
        let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut rng = SeededRng::new(seed);
        let v: Vec<f64> = (0..self.dim).map(|_| 2.0 * rng.unit() - 1.0).collect();
        let n = crate::steering::l2_norm(&v);
        v.into_iter().map(|x| x / n).collect()
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(64)
    }
}

impl TokenEmbedder for HashEmbedder {
    fn name(&self) -> &str {
        "hash"
    }

    fn embed(&self, text: &str) -> Result<Vec<Vec<f64>>> {
        Ok(word_tokens(text).iter().map(|t| self.vector(t)).collect())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = crate::steering::l2_norm(a);
    let nb = crate::steering::l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Greedy matching: precision averages each candidate token's best cosine
/// against the reference, recall the reverse. F1 is the harmonic mean when
/// precision and recall are both positive and 0 otherwise.
pub fn greedy_match(cand: &[Vec<f64>], reference: &[Vec<f64>]) -> RougeTriple {
    if cand.is_empty() || reference.is_empty() {
        return RougeTriple::ZERO;
    }
    let best_mean = |xs: &[Vec<f64>], ys: &[Vec<f64>]| {
        xs.iter()
            .map(|x| ys.iter().map(|y| cosine(x, y)).fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / xs.len() as f64
    };
    let p = best_mean(cand, reference);
    let r = best_mean(reference, cand);
    let f1 = if p > 0.0 && r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    RougeTriple {
        precision: p,
        recall: r,
        f1,
    }
}

pub fn semantic_similarity(candidate: &str, reference: &str, embedder: &dyn TokenEmbedder) -> Result<RougeTriple> {
    let wrap = |e: Error| match e {
        Error::Adapter { name, reason } => Error::Adapter {
            name,
            reason: format!("embedding for semantic similarity: {reason}"),
        },
        other => other,
    };
    let c = embedder.embed(candidate).map_err(wrap)?;
    let r = embedder.embed(reference).map_err(wrap)?;
    Ok(greedy_match(&c, &r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicReport {
    pub rouge1: RougeTriple,
    pub rouge2: RougeTriple,
    pub rouge_l: RougeTriple,
    pub semantic_similarity: f64,
}

pub fn extrinsic_report(
    candidate: &str,
    reference: &str,
    opts: RougeOptions,
    embedder: &dyn TokenEmbedder,
) -> Result<ExtrinsicReport> {
    Ok(ExtrinsicReport {
        rouge1: rouge_n(candidate, reference, 1, opts),
        rouge2: rouge_n(candidate, reference, 2, opts),
        rouge_l: rouge_l(candidate, reference, opts),
        semantic_similarity: semantic_similarity(candidate, reference, embedder)?.f1,
    })
}
