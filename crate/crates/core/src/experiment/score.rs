//! Full metric set for one summary, as a flat name → value map.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    distinct2_char, distinct2_word, perplexity, rouge_l, rouge_n, semantic_similarity, HashEmbedder, RougeOptions,
    RougeTriple, TokenEmbedder,
};
use crate::model::LanguageModel;
use crate::newts::{NewtsRecord, TopicModelArtifacts};
use crate::scorers::{
    classifier_sentiment, lexicon_sentiment, readability, topic_score_dict, topic_score_lemma, topic_score_token,
    toxicity, AdapterEmbedder, AdapterToxicity, LemmaMode, Lexicon, ProfanityScorer, ReadabilityMode, ScorerAdapter,
    ToxicityScorer, WordTokenizer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricGroup {
    Perplexity,
    Distinct2,
    Rouge,
    Similarity,
    Topic,
    Sentiment,
    Toxicity,
    Readability,
}

impl MetricGroup {
    pub const ALL: [MetricGroup; 8] = [
        MetricGroup::Perplexity,
        MetricGroup::Distinct2,
        MetricGroup::Rouge,
        MetricGroup::Similarity,
        MetricGroup::Topic,
        MetricGroup::Sentiment,
        MetricGroup::Toxicity,
        MetricGroup::Readability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricGroup::Perplexity => "perplexity",
            MetricGroup::Distinct2 => "distinct2",
            MetricGroup::Rouge => "rouge",
            MetricGroup::Similarity => "similarity",
            MetricGroup::Topic => "topic",
            MetricGroup::Sentiment => "sentiment",
            MetricGroup::Toxicity => "toxicity",
            MetricGroup::Readability => "readability",
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<MetricGroup>> {
        if s.trim() == "all" {
            return Ok(Self::ALL.to_vec());
        }
        let mut out: Vec<MetricGroup> = s
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for MetricGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricGroup::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            let valid: Vec<&str> = MetricGroup::ALL.iter().map(|m| m.as_str()).collect();
            Error::Invalid(format!("unknown metric `{s}`; valid metrics: {}, all", valid.join(", ")))
        })
    }
}

/// Which external adapters to use. Each entry is `name [args…]`; the name is
/// resolved through `STEERLAB_ADAPTERS`. Unset entries use the built-in
/// scorer or are skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub sentiment: Option<String>,
    #[serde(default)]
    pub toxicity: Vec<String>,
    pub readability_signed: Option<String>,
    pub readability_grade: Option<String>,
    pub embedder: Option<String>,
}

/// Static scoring settings shared by all workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub groups: Vec<MetricGroup>,
    pub rouge: RougeOptions,
    pub lemma_mode: LemmaMode,
    pub adapters: AdapterConfig,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            groups: MetricGroup::ALL.to_vec(),
            rouge: RougeOptions::default(),
            lemma_mode: LemmaMode::Binary,
            adapters: AdapterConfig::default(),
        }
    }
}

fn spawn_adapter(spec: &str) -> Result<ScorerAdapter> {
    let mut parts = spec.split_whitespace();
    let name = parts
        .next()
        .ok_or_else(|| Error::Invalid("empty adapter name".into()))?;
    let args: Vec<String> = parts.map(str::to_string).collect();
    ScorerAdapter::spawn(name, &args)
}

/// Metric label for a toxicity adapter: its file name without arguments.
fn adapter_label(spec: &str) -> String {
    let name = spec.split_whitespace().next().unwrap_or(spec);
    let base = name.rsplit(['/', '\\']).next().unwrap_or(name);
    base.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Per-worker scorer instances; adapter channels are not shared.
pub struct Scorers<'a> {
    config: &'a ScoringConfig,
    perplexity_model: Option<&'a dyn LanguageModel>,
    artifacts: Option<&'a TopicModelArtifacts>,
    word_tokenizer: Option<WordTokenizer>,
    lexicon: Lexicon,
    embedder: Box<dyn TokenEmbedder>,
    sentiment: Option<ScorerAdapter>,
    toxicity: Vec<Box<dyn ToxicityScorer>>,
    readability_signed: Option<ScorerAdapter>,
    readability_grade: Option<ScorerAdapter>,
}

/// Values of one scored summary plus notes on metrics that could not be computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub metrics: BTreeMap<String, Option<f64>>,
    pub flags: Vec<String>,
}

impl Scored {
    fn put(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), Some(value));
    }

    fn fail(&mut self, name: impl Into<String>, err: impl fmt::Display) {
        let name = name.into();
        self.flags.push(format!("{name}: {err}"));
        self.metrics.insert(name, None);
    }

    fn put_result(&mut self, name: impl Into<String>, r: Result<f64>) {
        match r {
            Ok(v) => self.put(name, v),
            Err(e) => self.fail(name, e),
        }
    }

    fn put_triple(&mut self, prefix: &str, suffix: &str, t: RougeTriple) {
        self.put(format!("{prefix}_p_{suffix}"), t.precision);
        self.put(format!("{prefix}_r_{suffix}"), t.recall);
        self.put(format!("{prefix}_f1_{suffix}"), t.f1);
    }
}

impl<'a> Scorers<'a> {
    pub fn new(
        config: &'a ScoringConfig,
        perplexity_model: Option<&'a dyn LanguageModel>,
        artifacts: Option<&'a TopicModelArtifacts>,
        lexicon: Lexicon,
    ) -> Result<Self> {
        let a = &config.adapters;
        let spawn = |name: &Option<String>| name.as_deref().map(spawn_adapter).transpose();
        let embedder: Box<dyn TokenEmbedder> = match &a.embedder {
            Some(n) => Box::new(AdapterEmbedder(spawn_adapter(n)?)),
            None => Box::new(HashEmbedder::default()),
        };
        let mut tox: Vec<Box<dyn ToxicityScorer>> = vec![Box::new(ProfanityScorer::builtin())];
        for spec in &a.toxicity {
            tox.push(Box::new(AdapterToxicity::new(adapter_label(spec), spawn_adapter(spec)?)));
        }
        Ok(Self {
            config,
            perplexity_model,
            artifacts,
            word_tokenizer: artifacts.map(WordTokenizer::new),
            lexicon,
            embedder,
            sentiment: spawn(&a.sentiment)?,
            toxicity: tox,
            readability_signed: spawn(&a.readability_signed)?,
            readability_grade: spawn(&a.readability_grade)?,
        })
    }

    fn wants(&self, g: MetricGroup) -> bool {
        self.config.groups.contains(&g)
    }

    /// Scores `summary`; references and topic ids come from `record` when given.
    pub fn score(&self, summary: &str, record: Option<&NewtsRecord>) -> Scored {
        let mut s = Scored::default();
        if self.wants(MetricGroup::Perplexity) {
            match self.perplexity_model {
                Some(m) => s.put_result("perplexity", perplexity(summary, m)),
                None => s.fail("perplexity", "no scoring model"),
            }
        }
        if self.wants(MetricGroup::Distinct2) {
            s.put("distinct2_word", distinct2_word(summary));
            s.put("distinct2_char", distinct2_char(summary));
        }
        if let Some(rec) = record {
            for (suffix, reference) in [("ref1", &rec.summary1), ("ref2", &rec.summary2)] {
                if self.wants(MetricGroup::Rouge) {
                    let o = self.config.rouge;
                    s.put_triple("rouge1", suffix, rouge_n(summary, reference, 1, o));
                    s.put_triple("rouge2", suffix, rouge_n(summary, reference, 2, o));
                    s.put_triple("rougeL", suffix, rouge_l(summary, reference, o));
                }
                if self.wants(MetricGroup::Similarity) {
                    match semantic_similarity(summary, reference, self.embedder.as_ref()) {
                        Ok(t) => s.put_triple("similarity", suffix, t),
                        Err(e) => s.fail(format!("similarity_f1_{suffix}"), e),
                    }
                }
            }
            if self.wants(MetricGroup::Topic) {
                match (self.artifacts, &self.word_tokenizer) {
                    (Some(a), Some(tok)) => {
                        for (suffix, tid) in [("tid1", rec.tid1), ("tid2", rec.tid2)] {
                            s.put_result(
                                format!("topic_lemma_{suffix}"),
                                topic_score_lemma(summary, a, tid, self.config.lemma_mode).map(|t| t.value),
                            );
                            s.put_result(
                                format!("topic_token_{suffix}"),
                                topic_score_token(summary, tok, a, tid).map(|t| t.value),
                            );
                            s.put_result(
                                format!("topic_dict_{suffix}"),
                                topic_score_dict(summary, a, tid).map(|t| t.value),
                            );
                        }
                    }
                    _ => s.fail("topic_dict_tid1", "no topic model artifacts"),
                }
            }
        }
        if self.wants(MetricGroup::Sentiment) {
            s.put("sentiment_lexicon", lexicon_sentiment(summary, &self.lexicon).value);
            if let Some(a) = &self.sentiment {
                s.put_result("sentiment_classifier", classifier_sentiment(summary, a).map(|x| x.value));
            }
        }
        if self.wants(MetricGroup::Toxicity) {
            let scorers: Vec<&dyn ToxicityScorer> = self.toxicity.iter().map(|b| b.as_ref()).collect();
            match toxicity(summary, &scorers) {
                Ok(report) => {
                    for t in report.scores {
                        s.put(format!("toxicity_{}", t.label), t.value);
                    }
                    for (label, msg) in report.failures {
                        s.fail(format!("toxicity_{label}"), msg);
                    }
                }
                Err(e) => s.fail("toxicity_profanity", e),
            }
        }
        if self.wants(MetricGroup::Readability) {
            s.put_result(
                "readability_grade",
                readability(summary, ReadabilityMode::BuiltinGrade, None).map(|r| r.value),
            );
            if let Some(a) = &self.readability_signed {
                s.put_result(
                    "readability_signed",
                    readability(summary, ReadabilityMode::AdapterSigned, Some(a)).map(|r| r.value),
                );
            }
            if let Some(a) = &self.readability_grade {
                s.put_result(
                    "readability_model_grade",
                    readability(summary, ReadabilityMode::AdapterGrade, Some(a)).map(|r| r.value),
                );
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_names_parse() {
        assert_eq!(MetricGroup::parse_list("rouge, distinct2").unwrap(), vec![MetricGroup::Distinct2, MetricGroup::Rouge]);
        let e = MetricGroup::parse_list("bleu").unwrap_err().to_string();
        assert!(e.contains("perplexity") && e.contains("readability"));
    }

    #[test]
    fn filtering_keeps_only_requested() {
        let cfg = ScoringConfig {
            groups: vec![MetricGroup::Distinct2],
            ..Default::default()
        };
        let s = Scorers::new(&cfg, None, None, Lexicon::builtin()).unwrap();
        let out = s.score("a b c", None);
        assert_eq!(out.metrics.keys().collect::<Vec<_>>(), vec!["distinct2_char", "distinct2_word"]);
    }
}
