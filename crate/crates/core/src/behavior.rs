use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type TopicId = u32;

/// Text property family, without a specific topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BehaviorKind {
    Topic,
    Sentiment,
    Toxicity,
    Readability,
}

/// A steerable property; topic behaviors name their LDA topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Behavior {
    Topic(TopicId),
    Sentiment,
    Toxicity,
    Readability,
}

impl Behavior {
    pub fn kind(self) -> BehaviorKind {
        match self {
            Behavior::Topic(_) => BehaviorKind::Topic,
            Behavior::Sentiment => BehaviorKind::Sentiment,
            Behavior::Toxicity => BehaviorKind::Toxicity,
            Behavior::Readability => BehaviorKind::Readability,
        }
    }
}

impl BehaviorKind {
    pub const ALL: [BehaviorKind; 4] = [
        BehaviorKind::Topic,
        BehaviorKind::Sentiment,
        BehaviorKind::Toxicity,
        BehaviorKind::Readability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorKind::Topic => "topic",
            BehaviorKind::Sentiment => "sentiment",
            BehaviorKind::Toxicity => "toxicity",
            BehaviorKind::Readability => "readability",
        }
    }
}

impl fmt::Display for BehaviorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BehaviorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BehaviorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "unknown behavior `{s}` (expected topic, sentiment, toxicity or readability)"
                ))
            })
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Behavior::Topic(tid) => write!(f, "topic:{tid}"),
            other => f.write_str(other.kind().as_str()),
        }
    }
}

impl FromStr for Behavior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(tid) = s.strip_prefix("topic:") {
            let tid = tid
                .parse()
                .map_err(|_| Error::Invalid(format!("bad topic id in behavior `{s}`")))?;
            return Ok(Behavior::Topic(tid));
        }
        match s.parse::<BehaviorKind>()? {
            BehaviorKind::Topic => Err(Error::Invalid(
                "topic behavior needs a topic id, e.g. `topic:17`".into(),
            )),
            BehaviorKind::Sentiment => Ok(Behavior::Sentiment),
            BehaviorKind::Toxicity => Ok(Behavior::Toxicity),
            BehaviorKind::Readability => Ok(Behavior::Readability),
        }
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(Behavior);
string_serde!(BehaviorKind);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for s in ["topic:17", "sentiment", "toxicity", "readability"] {
            assert_eq!(s.parse::<Behavior>().unwrap().to_string(), s);
        }
        assert!("topic".parse::<Behavior>().is_err());
        assert!("humor".parse::<Behavior>().is_err());
        assert_eq!("topic".parse::<BehaviorKind>().unwrap(), BehaviorKind::Topic);
    }
}
