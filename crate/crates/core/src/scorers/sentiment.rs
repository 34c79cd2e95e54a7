//! Lexicon and classifier sentiment, both on [−1, 1].

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adapter::ScorerAdapter;
use crate::error::{Error, Result};
use crate::metrics::word_tokens;

const BUILTIN_LEXICON: &str = include_str!("../../data/lexicon.tsv");

/// Normalization constant of `x / √(x² + α)`.
pub const ALPHA: f64 = 15.0;
/// Tokens before a lexicon word searched for negators.
pub const NEGATION_SCOPE: usize = 3;
/// Multiplier applied once per negator in scope.
pub const NEGATION_SCALAR: f64 = -0.74;

const NEGATORS: &[&str] = &[
    "not", "no", "never", "none", "nobody", "nothing", "neither", "nor", "nowhere", "cannot",
    "without", "hardly", "rarely", "seldom",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentSource {
    Lexicon,
    Classifier,
}

impl fmt::Display for SentimentSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SentimentSource::Lexicon => "lexicon",
            SentimentSource::Classifier => "classifier",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentScore {
    pub source: SentimentSource,
    pub value: f64,
}

/// Word to valence table; files are `word<TAB>valence` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    valences: HashMap<String, f64>,
}

impl Lexicon {
    pub fn new(valences: HashMap<String, f64>) -> Self {
        Self { valences }
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_LEXICON, Path::new("<builtin lexicon>")).expect("shipped lexicon parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut valences = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut f = line.split('\t');
            let (Some(w), Some(v)) = (f.next(), f.next()) else {
                return Err(Error::parse(path, i + 1, "expected word<TAB>valence"));
            };
            let v: f64 = v
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::parse(path, i + 1, "bad valence"))?;
            valences.insert(w.trim().to_lowercase(), v);
        }
        Ok(Self { valences })
    }

    pub fn valence(&self, word: &str) -> Option<f64> {
        self.valences.get(word).copied()
    }

    /// Same words with every valence negated.
    pub fn mirrored(&self) -> Self {
        Self {
            valences: self.valences.iter().map(|(w, v)| (w.clone(), -v)).collect(),
        }
    }
}

fn is_negator(token: &str) -> bool {
    NEGATORS.contains(&token) || token.ends_with("n't")
}

/// Raw valence sum before normalization.
pub fn lexicon_sum(text: &str, lexicon: &Lexicon) -> f64 {
    let tokens = word_tokens(text);
    let mut sum = 0.0;
    for (i, t) in tokens.iter().enumerate() {
        let Some(mut v) = lexicon.valence(t) else {
            continue;
        };
        for prev in &tokens[i.saturating_sub(NEGATION_SCOPE)..i] {
            if is_negator(prev) {
                v *= NEGATION_SCALAR;
            }
        }
        sum += v;
    }
    sum
}

pub fn lexicon_sentiment(text: &str, lexicon: &Lexicon) -> SentimentScore {
    let x = lexicon_sum(text, lexicon);
    SentimentScore {
        source: SentimentSource::Lexicon,
        value: x / (x * x + ALPHA).sqrt(),
    }
}

/// Maps classifier output to [−1, 1] as `(E[stars] − 3) / 2`. One value is
/// a star rating in [1, 5]; five values are a distribution over 1..=5 stars.
pub fn stars_to_sentiment(output: &[f64]) -> Result<f64> {
    let stars = match output {
        [s] => *s,
        probs if probs.len() == 5 => {
            let total: f64 = probs.iter().sum();
            if probs.iter().any(|p| *p < 0.0) || total <= 0.0 {
                return Err(Error::Invalid("star distribution must be non-negative and nonzero".into()));
            }
            probs
                .iter()
                .enumerate()
                .map(|(i, p)| (i + 1) as f64 * p / total)
                .sum()
        }
        other => {
            return Err(Error::Invalid(format!(
                "classifier returned {} values; expected 1 star rating or 5 probabilities",
                other.len()
            )))
        }
    };
    Ok(((stars - 3.0) / 2.0).clamp(-1.0, 1.0))
}

pub fn classifier_sentiment(text: &str, adapter: &ScorerAdapter) -> Result<SentimentScore> {
    let out = adapter.scores(text)?;
    let value = stars_to_sentiment(&out).map_err(|e| Error::Adapter {
        name: adapter.name().into(),
        reason: e.to_string(),
    })?;
    Ok(SentimentScore {
        source: SentimentSource::Classifier,
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_words() -> Lexicon {
        Lexicon::new([("good".to_string(), 1.9), ("bad".to_string(), -2.5)].into_iter().collect())
    }

    #[test]
    fn negation_flips_sign() {
        let l = two_words();
        let plain = lexicon_sentiment("good", &l).value;
        let negated = lexicon_sentiment("not good", &l).value;
        assert!(plain > 0.0 && negated < 0.0);
        assert!((plain - 1.9 / (1.9f64 * 1.9 + 15.0).sqrt()).abs() < 1e-15);
        assert!(lexicon_sentiment("isn't really that good", &l).value < 0.0);
        assert!(lexicon_sentiment("not one of the good", &l).value > 0.0);
        assert_eq!(lexicon_sentiment("plain words", &l).value, 0.0);
    }

    #[test]
    fn star_mapping() {
        assert_eq!(stars_to_sentiment(&[5.0]).unwrap(), 1.0);
        assert_eq!(stars_to_sentiment(&[3.0]).unwrap(), 0.0);
        assert_eq!(stars_to_sentiment(&[1.0]).unwrap(), -1.0);
        assert_eq!(stars_to_sentiment(&[0.5, 0.0, 0.0, 0.0, 0.5]).unwrap(), 0.0);
        assert!((stars_to_sentiment(&[4.2]).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn builtin_lexicon_loads() {
        let l = Lexicon::builtin();
        assert!(l.valence("great").unwrap() > 0.0);
        assert!(l.valence("awful").unwrap() < 0.0);
    }
}
