//! Toxicity scores on [0, 1], one per configured scorer.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::adapter::ScorerAdapter;
use super::lemma::lemmatize;
use crate::error::{Error, Result};
use crate::metrics::word_tokens;

const BUILTIN_PROFANITY: &str = include_str!("../../data/profanity.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicityScore {
    pub label: String,
    pub value: f64,
}

pub trait ToxicityScorer: Send + Sync {
    fn label(&self) -> &str;
    fn score(&self, text: &str) -> Result<f64>;
}

/// Offline fallback: share of word tokens found in a profanity list.
#[derive(Debug, Clone)]
pub struct ProfanityScorer {
    words: HashSet<String>,
}

impl ProfanityScorer {
    pub fn new(words: impl IntoIterator<Item = String>) -> Self {
        Self {
            words: words.into_iter().map(|w| w.to_lowercase()).collect(),
        }
    }

    pub fn builtin() -> Self {
        Self::new(
            BUILTIN_PROFANITY
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from),
        )
    }

    fn is_profane(&self, token: &str) -> bool {
        self.words.contains(token) || self.words.contains(&lemmatize(token))
    }
}

impl ToxicityScorer for ProfanityScorer {
    fn label(&self) -> &str {
        "profanity"
    }

    fn score(&self, text: &str) -> Result<f64> {
        let tokens = word_tokens(text);
        if tokens.is_empty() {
            return Ok(0.0);
        }
        let hits = tokens.iter().filter(|t| self.is_profane(t)).count();
        Ok(hits as f64 / tokens.len() as f64)
    }
}

/// Classifier behind `scorer/1`, reporting one probability per text.
pub struct AdapterToxicity {
    label: String,
    adapter: ScorerAdapter,
}

impl AdapterToxicity {
    pub fn new(label: impl Into<String>, adapter: ScorerAdapter) -> Self {
        Self {
            label: label.into(),
            adapter,
        }
    }
}

impl ToxicityScorer for AdapterToxicity {
    fn label(&self) -> &str {
        &self.label
    }

    fn score(&self, text: &str) -> Result<f64> {
        Ok(self.adapter.scores(text)?[0])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToxicityReport {
    pub scores: Vec<ToxicityScore>,
    /// `(label, message)` for scorers that failed on this text.
    pub failures: Vec<(String, String)>,
}

/// Runs every scorer, clamping results to [0, 1]. Fails only when all do.
pub fn toxicity(text: &str, scorers: &[&dyn ToxicityScorer]) -> Result<ToxicityReport> {
    if scorers.is_empty() {
        return Err(Error::Invalid("no toxicity scorer configured".into()));
    }
    let mut report = ToxicityReport::default();
    for s in scorers {
        match s.score(text) {
            Ok(v) if v.is_nan() => report
                .failures
                .push((s.label().to_string(), "returned NaN".into())),
            Ok(v) => report.scores.push(ToxicityScore {
                label: s.label().to_string(),
                value: v.clamp(0.0, 1.0),
            }),
            Err(e) => report.failures.push((s.label().to_string(), e.to_string())),
        }
    }
    if report.scores.is_empty() {
        let listed: Vec<String> = report
            .failures
            .iter()
            .map(|(l, m)| format!("{l}: {m}"))
            .collect();
        return Err(Error::Adapter {
            name: "toxicity".into(),
            reason: format!("every scorer failed ({})", listed.join("; ")),
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(f64);

    impl ToxicityScorer for Fixed {
        fn label(&self) -> &str {
            "fixed"
        }
        fn score(&self, _: &str) -> Result<f64> {
            Ok(self.0)
        }
    }

    struct Broken;

    impl ToxicityScorer for Broken {
        fn label(&self) -> &str {
            "broken"
        }
        fn score(&self, _: &str) -> Result<f64> {
            Err(Error::Invalid("down".into()))
        }
    }

    #[test]
    fn fallback_extremes() {
        let p = ProfanityScorer::builtin();
        assert_eq!(p.score("The council approved the new library budget.").unwrap(), 0.0);
        let r = p.score("fuck fuck fuck fuck fuck fuck fuck fuck").unwrap();
        assert!(r > 0.99);
    }

    #[test]
    fn adversarial_outputs_are_clamped() {
        let hi = Fixed(7.0);
        let lo = Fixed(-3.0);
        let r = toxicity("x", &[&hi, &lo]).unwrap();
        assert_eq!(r.scores.iter().map(|s| s.value).collect::<Vec<_>>(), vec![1.0, 0.0]);
    }

    #[test]
    fn all_failing_lists_each() {
        let e = toxicity("x", &[&Broken, &Broken]).unwrap_err().to_string();
        assert_eq!(e.matches("broken: ").count(), 2);
        let partial = toxicity("x", &[&Broken, &Fixed(0.2)]).unwrap();
        assert_eq!(partial.failures.len(), 1);
    }
}
