//! Behavior-specific scorers: topic focus, sentiment, toxicity, readability.

pub mod adapter;
pub mod lemma;
pub mod readability;
pub mod sentiment;
pub mod toxicity;
pub mod topic;

pub use adapter::{find_adapter, AdapterEmbedder, ScorerAdapter, ADAPTERS_ENV};
pub use lemma::lemmatize;
pub use readability::{flesch_kincaid_grade, readability, ReadabilityMode, ReadabilityScale, ReadabilityScore};
pub use sentiment::{classifier_sentiment, lexicon_sentiment, Lexicon, SentimentScore, SentimentSource};
pub use topic::{
    fold_in, topic_score_dict, topic_score_lemma, topic_score_token, LemmaMode, ModelTokenizer, TextTokenizer,
    TopicMethod, TopicScore, WordTokenizer,
};
pub use toxicity::{toxicity, AdapterToxicity, ProfanityScorer, ToxicityReport, ToxicityScore, ToxicityScorer};
