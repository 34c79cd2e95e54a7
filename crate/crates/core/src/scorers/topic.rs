//! Topic focus of a summary against one LDA topic.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::lemma::lemmatize;
use crate::behavior::TopicId;
use crate::error::{Error, Result};
use crate::metrics::word_tokens;
use crate::model::LanguageModel;
use crate::newts::TopicModelArtifacts;

/// Number of highest-weight topic words used by the lemma and token methods.
pub const TOP_WORDS: usize = 20;
pub const FOLD_IN_MAX_ITERS: usize = 50;
pub const FOLD_IN_TOLERANCE: f64 = 1e-6;
/// Count at which a lemma saturates in [`LemmaMode::Frequency`].
pub const FREQUENCY_CAP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopicMethod {
    Lemma,
    Token,
    Dict,
}

impl TopicMethod {
    pub const ALL: [TopicMethod; 3] = [TopicMethod::Lemma, TopicMethod::Token, TopicMethod::Dict];

    pub fn as_str(self) -> &'static str {
        match self {
            TopicMethod::Lemma => "lemma",
            TopicMethod::Token => "token",
            TopicMethod::Dict => "dict",
        }
    }
}

impl fmt::Display for TopicMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopicMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TopicMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown topic method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicScore {
    pub method: TopicMethod,
    pub tid: TopicId,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LemmaMode {
    /// A topic lemma counts once if present.
    #[default]
    Binary,
    /// A topic lemma counts `min(count, FREQUENCY_CAP) / FREQUENCY_CAP`.
    Frequency,
}

/// Weighted share of the topic's top lemmas present in the summary.
pub fn topic_score_lemma(
    summary: &str,
    artifacts: &TopicModelArtifacts,
    tid: TopicId,
    mode: LemmaMode,
) -> Result<TopicScore> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for w in word_tokens(summary) {
        *counts.entry(lemmatize(&w)).or_insert(0) += 1;
    }
    let mut total = 0.0;
    let mut hit = 0.0;
    for (word, weight) in artifacts.top_words(tid, TOP_WORDS)? {
        total += weight;
        let c = counts.get(&lemmatize(word)).copied().unwrap_or(0);
        hit += weight
            * match mode {
                LemmaMode::Binary => (c > 0) as u8 as f64,
                LemmaMode::Frequency => c.min(FREQUENCY_CAP) as f64 / FREQUENCY_CAP as f64,
            };
    }
    Ok(TopicScore {
        method: TopicMethod::Lemma,
        tid,
        value: (hit / total).clamp(0.0, 1.0),
    })
}

/// Text to token ids, as used by the token-match method.
pub trait TextTokenizer {
    fn token_ids(&self, text: &str) -> Vec<u64>;
}

/// Word-level tokenizer over the LDA dictionary. Topic words missing from
/// the dictionary get fresh ids; any other unknown word maps to one shared
/// id that no topic word uses.
#[derive(Debug, Clone)]
pub struct WordTokenizer {
    ids: BTreeMap<String, u64>,
}

impl WordTokenizer {
    const UNKNOWN: u64 = u64::MAX;

    pub fn new(artifacts: &TopicModelArtifacts) -> Self {
        let mut ids: BTreeMap<String, u64> = artifacts
            .dictionary()
            .iter()
            .map(|(w, id)| (w.clone(), *id as u64))
            .collect();
        let mut next = ids.values().max().map_or(0, |m| m + 1);
        for tid in 0..artifacts.num_topics() {
            for (w, _) in artifacts.topic_words(tid as TopicId).expect("tid in range") {
                if !ids.contains_key(w) {
                    ids.insert(w.clone(), next);
                    next += 1;
                }
            }
        }
        Self { ids }
    }
}

impl TextTokenizer for WordTokenizer {
    fn token_ids(&self, text: &str) -> Vec<u64> {
        word_tokens(text)
            .iter()
            .map(|w| self.ids.get(w).copied().unwrap_or(Self::UNKNOWN))
            .collect()
    }
}

/// A language model's own tokenizer.
pub struct ModelTokenizer<'a>(pub &'a dyn LanguageModel);

impl TextTokenizer for ModelTokenizer<'_> {
    fn token_ids(&self, text: &str) -> Vec<u64> {
        self.0.tokenize(text).into_iter().map(u64::from).collect()
    }
}

/// Share of summary tokens whose id belongs to a top topic word.
pub fn topic_score_token(
    summary: &str,
    tokenizer: &dyn TextTokenizer,
    artifacts: &TopicModelArtifacts,
    tid: TopicId,
) -> Result<TopicScore> {
    let matches: HashSet<u64> = artifacts
        .top_words(tid, TOP_WORDS)?
        .iter()
        .flat_map(|(w, _)| tokenizer.token_ids(w))
        .collect();
    let ids = tokenizer.token_ids(summary);
    let value = if ids.is_empty() {
        log::warn!("token topic score of an empty summary is 0");
        0.0
    } else {
        ids.iter().filter(|i| matches.contains(i)).count() as f64 / ids.len() as f64
    };
    Ok(TopicScore {
        method: TopicMethod::Token,
        tid,
        value,
    })
}

/// Bag of words for fold-in: dictionary words, looked up as written and then
/// as their lemma.
pub fn dictionary_bag(summary: &str, artifacts: &TopicModelArtifacts) -> BTreeMap<String, f64> {
    let dict = artifacts.dictionary();
    let mut bag = BTreeMap::new();
    for w in word_tokens(summary) {
        let key = if dict.contains_key(&w) {
            Some(w)
        } else {
            let l = lemmatize(&w);
            dict.contains_key(&l).then_some(l)
        };
        if let Some(k) = key {
            *bag.entry(k).or_insert(0.0) += 1.0;
        }
    }
    bag
}

/// θ for a bag of words with φ fixed, by fold-in fixed-point iteration from
/// the uniform distribution. Words no topic lists are ignored; an empty
/// effective bag gives the uniform distribution.
pub fn fold_in(bag: &BTreeMap<String, f64>, artifacts: &TopicModelArtifacts) -> Vec<f64> {
    let k = artifacts.num_topics();
    let uniform = vec![1.0 / k as f64; k];
    let rows: Vec<(f64, Vec<f64>)> = bag
        .iter()
        .filter(|(_, c)| **c > 0.0)
        .map(|(w, c)| (*c, (0..k).map(|t| artifacts.weight(t, w)).collect::<Vec<_>>()))
        .filter(|(_, phi)| phi.iter().any(|p| *p > 0.0))
        .collect();
    if rows.is_empty() {
        log::debug!("no in-vocabulary topic words; dictionary topic score falls back to uniform");
        return uniform;
    }
    let mut theta = uniform;
    for _ in 0..FOLD_IN_MAX_ITERS {
        let mut next = vec![0.0; k];
        for (c, phi) in &rows {
            let z: f64 = phi.iter().zip(&theta).map(|(p, t)| p * t).sum();
            if z <= 0.0 {
                continue;
            }
            for ((n, p), t) in next.iter_mut().zip(phi).zip(&theta) {
                *n += c * p * t / z;
            }
        }
        let s: f64 = next.iter().sum();
        if s <= 0.0 {
            break;
        }
        next.iter_mut().for_each(|v| *v /= s);
        let change = next
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        theta = next;
        if change < FOLD_IN_TOLERANCE {
            break;
        }
    }
    theta
}

pub fn topic_score_dict(summary: &str, artifacts: &TopicModelArtifacts, tid: TopicId) -> Result<TopicScore> {
    artifacts.topic_words(tid)?;
    let theta = fold_in(&dictionary_bag(summary, artifacts), artifacts);
    Ok(TopicScore {
        method: TopicMethod::Dict,
        tid,
        value: theta[tid as usize],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn artifacts() -> TopicModelArtifacts {
        let topics = vec![
            vec![("child".into(), 0.5), ("parent".into(), 0.3), ("family".into(), 0.2)],
            vec![("goal".into(), 0.6), ("match".into(), 0.4)],
        ];
        let dict = ["child", "parent", "family", "goal", "match", "the", "a"]
            .iter()
            .enumerate()
            .map(|(i, w)| (w.to_string(), i as u32))
            .collect();
        TopicModelArtifacts::new(topics, dict, HashMap::new()).unwrap()
    }

    #[test]
    fn lemma_binary_presence() {
        let a = artifacts();
        let s = topic_score_lemma("The children and their family", &a, 0, LemmaMode::Binary).unwrap();
        assert!((s.value - 0.7).abs() < 1e-12);
        assert_eq!(topic_score_lemma("nothing here", &a, 0, LemmaMode::Binary).unwrap().value, 0.0);
        assert_eq!(topic_score_lemma("child parent family", &a, 0, LemmaMode::Binary).unwrap().value, 1.0);
    }

    #[test]
    fn token_share() {
        let a = artifacts();
        let t = WordTokenizer::new(&a);
        let s = topic_score_token("child x y z goal a b c parent d e family", &t, &a, 0).unwrap();
        assert!((s.value - 0.25).abs() < 1e-12);
        assert_eq!(topic_score_token("", &t, &a, 0).unwrap().value, 0.0);
    }

    #[test]
    fn fold_in_concentrates_on_disjoint_topic() {
        let a = artifacts();
        let s = topic_score_dict("goal match goal", &a, 1).unwrap();
        assert!(s.value > 0.9);
        let empty = topic_score_dict("the a", &a, 0).unwrap();
        assert_eq!(empty.value, 0.5);
    }
}
