//! Readability: a built-in Flesch–Kincaid grade level, or adapter models on
//! their own scales.
//!
//! Built-in statistics: sentences are runs of text ended by `.`, `!` or `?`
//! that contain at least one word (a final unterminated run counts too);
//! words are [`word_tokens`]; syllables are vowel groups (`aeiouy`) with a
//! silent final `e` removed, at least one per word.
//!
//! `grade = 0.39·words/sentences + 11.8·syllables/words − 15.59`, floored at 0.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::adapter::ScorerAdapter;
use crate::error::{Error, Result};
use crate::metrics::word_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadabilityScale {
    GradeLevel,
    SignedReadability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadabilityScore {
    pub scale: ReadabilityScale,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadabilityMode {
    BuiltinGrade,
    AdapterSigned,
    AdapterGrade,
}

impl fmt::Display for ReadabilityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReadabilityMode::BuiltinGrade => "builtin-grade",
            ReadabilityMode::AdapterSigned => "adapter-signed",
            ReadabilityMode::AdapterGrade => "adapter-grade",
        })
    }
}

impl FromStr for ReadabilityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "builtin-grade" => Ok(ReadabilityMode::BuiltinGrade),
            "adapter-signed" => Ok(ReadabilityMode::AdapterSigned),
            "adapter-grade" => Ok(ReadabilityMode::AdapterGrade),
            other => Err(Error::Invalid(format!("unknown readability mode `{other}`"))),
        }
    }
}

pub fn count_syllables(word: &str) -> usize {
    let chars: Vec<char> = word.to_lowercase().chars().filter(|c| c.is_alphabetic()).collect();
    if chars.is_empty() {
        return 1;
    }
    let vowel = |c: char| "aeiouy".contains(c);
    let mut groups = 0;
    let mut prev = false;
    for &c in &chars {
        let v = vowel(c);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    let n = chars.len();
    if groups > 1 && chars[n - 1] == 'e' && !vowel(chars[n - 2]) && !(n >= 3 && chars[n - 2] == 'l' && !vowel(chars[n - 3])) {
        groups -= 1;
    }
    groups.max(1)
}

pub fn count_sentences(text: &str) -> usize {
    text.split(['.', '!', '?'])
        .filter(|s| !word_tokens(s).is_empty())
        .count()
}

pub fn flesch_kincaid_grade(text: &str) -> Result<f64> {
    let words = word_tokens(text);
    if words.is_empty() {
        return Err(Error::EmptyInput("readability is undefined for text without words".into()));
    }
    let sentences = count_sentences(text).max(1) as f64;
    let syllables: usize = words.iter().map(|w| count_syllables(w)).sum();
    let n = words.len() as f64;
    Ok((0.39 * n / sentences + 11.8 * syllables as f64 / n - 15.59).max(0.0))
}

/// Scores `text` in the given mode; adapter modes need `adapter`.
pub fn readability(text: &str, mode: ReadabilityMode, adapter: Option<&ScorerAdapter>) -> Result<ReadabilityScore> {
    if word_tokens(text).is_empty() {
        return Err(Error::EmptyInput("readability is undefined for text without words".into()));
    }
    let from_adapter = || -> Result<f64> {
        let a = adapter.ok_or_else(|| Error::Invalid(format!("readability mode {mode} needs an adapter")))?;
        Ok(a.scores(text)?[0])
    };
    Ok(match mode {
        ReadabilityMode::BuiltinGrade => ReadabilityScore {
            scale: ReadabilityScale::GradeLevel,
            value: flesch_kincaid_grade(text)?,
        },
        ReadabilityMode::AdapterGrade => ReadabilityScore {
            scale: ReadabilityScale::GradeLevel,
            value: from_adapter()?.max(0.0),
        },
        ReadabilityMode::AdapterSigned => ReadabilityScore {
            scale: ReadabilityScale::SignedReadability,
            value: from_adapter()?.clamp(-5.0, 5.0),
        },
    })
}
