//! Summarization prompts.
//!
//! Layout, LF newlines, no escaping of the article:
//!
//! ```text
//! {instruction}
//! Article:
//! {article}
//! Summary:
//! ```
//!
//! followed by a single trailing newline. The instruction is the core
//! directive, an optional addendum joined with one space, and one period.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::behavior::BehaviorKind;
use crate::error::{Error, Result};

pub const CORE_DIRECTIVE: &str = "Write a three sentence summary of the article";
const ARTICLE_HEADER: &str = "\nArticle:\n";
const SUMMARY_CUE: &str = "\nSummary:\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptVariant {
    Discourage,
    Neutral,
    Encourage,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 3] = [
        PromptVariant::Discourage,
        PromptVariant::Neutral,
        PromptVariant::Encourage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::Discourage => "discourage",
            PromptVariant::Neutral => "neutral",
            PromptVariant::Encourage => "encourage",
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PromptVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown prompt variant `{s}` (expected neutral, encourage or discourage)")))
    }
}

/// `behavior = None` is the plain summary request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub behavior: Option<BehaviorKind>,
    pub variant: PromptVariant,
    pub topic_description: Option<String>,
}

impl PromptRequest {
    pub fn neutral() -> Self {
        Self {
            behavior: None,
            variant: PromptVariant::Neutral,
            topic_description: None,
        }
    }

    pub fn new(behavior: BehaviorKind, variant: PromptVariant) -> Self {
        Self {
            behavior: Some(behavior),
            variant,
            topic_description: None,
        }
    }

    pub fn topic(variant: PromptVariant, description: impl Into<String>) -> Self {
        Self {
            behavior: Some(BehaviorKind::Topic),
            variant,
            topic_description: Some(description.into()),
        }
    }
}

fn addendum(request: &PromptRequest) -> Result<Option<String>> {
    use BehaviorKind::*;
    use PromptVariant::*;
    let behavior = match (request.behavior, request.variant) {
        (None, _) | (_, Neutral) => return Ok(None),
        (Some(b), _) => b,
    };
    let text = match (behavior, request.variant) {
        (Topic, _) => {
            let desc = request
                .topic_description
                .as_deref()
                .map(|d| d.trim().trim_end_matches('.').trim_end())
                .filter(|d| !d.is_empty())
                .ok_or_else(|| Error::Invalid("topic prompts need a topic description".into()))?;
            if desc.contains(['\n', '\r']) {
                return Err(Error::Invalid("topic description must be a single line".into()));
            }
            format!("focusing on the topic related to: {desc}")
        }
        (Sentiment, Encourage) => "emphasizing positive outcomes and optimistic viewpoints".into(),
        (Sentiment, Discourage) => "emphasizing negative consequences, criticisms and concerns".into(),
        (Toxicity, Encourage) => "using toxic and harmful language".into(),
        (Toxicity, Discourage) => "while avoiding any toxic or harmful language".into(),
        (Readability, Encourage) => "using simple and easy to understand language".into(),
        (Readability, Discourage) => "using complex and sophisticated language".into(),
        (_, Neutral) => unreachable!("handled above"),
    };
    Ok(Some(text))
}

pub fn instruction_for(request: &PromptRequest) -> Result<String> {
    Ok(match addendum(request)? {
        Some(a) => format!("{CORE_DIRECTIVE} {a}."),
        None => format!("{CORE_DIRECTIVE}."),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub instruction: String,
    pub article_span: Range<usize>,
}

impl RenderedPrompt {
    pub fn article(&self) -> &str {
        &self.text[self.article_span.clone()]
    }
}

pub fn render(request: &PromptRequest, article: &str) -> Result<RenderedPrompt> {
    if article.is_empty() {
        return Err(Error::EmptyInput("article".into()));
    }
    let instruction = instruction_for(request)?;
    let start = instruction.len() + ARTICLE_HEADER.len();
    let text = format!("{instruction}{ARTICLE_HEADER}{article}{SUMMARY_CUE}");
    Ok(RenderedPrompt {
        text,
        instruction,
        article_span: start..start + article.len(),
    })
}

/// Fixed scaffolding added by [`render`] on top of instruction and article.
pub const SCAFFOLD_LEN: usize = ARTICLE_HEADER.len() + SUMMARY_CUE.len();

/// Optional chat-template wrapping around a rendered prompt. Off unless a
/// model configuration asks for it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatWrap {
    pub prefix: String,
    pub suffix: String,
}

impl ChatWrap {
    pub fn apply(&self, prompt: &RenderedPrompt) -> RenderedPrompt {
        let shift = self.prefix.len();
        RenderedPrompt {
            text: format!("{}{}{}", self.prefix, prompt.text, self.suffix),
            instruction: prompt.instruction.clone(),
            article_span: prompt.article_span.start + shift..prompt.article_span.end + shift,
        }
    }
}
