//! Contrastive pair datasets and the `caa-pairs/1` file format.
//!
//! Topic pairs render a target topic representation against a seed-chosen
//! contrast topic of the same kind:
//!
//! - words: 8 to 15 words sampled with replacement (weighted when weights exist), space-joined
//! - n-grams: one sampled phrase
//! - descriptions: one description sentence
//! - documents: one document snippet cut to its first 256 whitespace tokens
//!
//! Polar pairs (sentiment, toxicity, readability) come from caller-supplied
//! positive and negative pools.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::behavior::{Behavior, TopicId};
use crate::error::{Error, Result};
use crate::newts::TopicModelArtifacts;
use crate::rng::SeededRng;

const PAIRS_FORMAT: &str = "caa-pairs/1";
const DOCUMENT_TOKENS: usize = 256;
const MAX_LENGTH_IMBALANCE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastPair {
    pub pair_id: String,
    pub positive: String,
    pub negative: String,
}

impl ContrastPair {
    pub fn new(
        pair_id: impl Into<String>,
        positive: impl Into<String>,
        negative: impl Into<String>,
    ) -> Self {
        Self {
            pair_id: pair_id.into(),
            positive: positive.into(),
            negative: negative.into(),
        }
    }

    /// Same texts with the labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pair_id: self.pair_id.clone(),
            positive: self.negative.clone(),
            negative: self.positive.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDataset {
    pub behavior: Behavior,
    pub pairs: Vec<ContrastPair>,
    pub provenance: String,
}

impl PairDataset {
    pub fn new(behavior: Behavior, pairs: Vec<ContrastPair>, provenance: impl Into<String>) -> Result<Self> {
        let d = Self {
            behavior,
            pairs,
            provenance: provenance.into(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut seen = HashSet::new();
        for p in &self.pairs {
            if !seen.insert(p.pair_id.as_str()) {
                return Err(Error::Invalid(format!("duplicate pair_id `{}`", p.pair_id)));
            }
        }
        Ok(())
    }

    pub fn swapped(&self) -> Self {
        Self {
            behavior: self.behavior,
            pairs: self.pairs.iter().map(ContrastPair::swapped).collect(),
            provenance: format!("{} (labels swapped)", self.provenance),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopicKind {
    Words,
    NGrams,
    Descriptions,
    Documents,
}

impl fmt::Display for TopicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopicKind::Words => "words",
            TopicKind::NGrams => "n-grams",
            TopicKind::Descriptions => "descriptions",
            TopicKind::Documents => "documents",
        })
    }
}

impl FromStr for TopicKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "words" => Ok(TopicKind::Words),
            "n-grams" | "ngrams" => Ok(TopicKind::NGrams),
            "descriptions" => Ok(TopicKind::Descriptions),
            "documents" => Ok(TopicKind::Documents),
            other => Err(Error::Invalid(format!("unknown topic representation kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRepresentation {
    pub tid: TopicId,
    pub kind: TopicKind,
    pub items: Vec<String>,
    pub weights: Option<Vec<f64>>,
}

impl TopicRepresentation {
    pub fn new(tid: TopicId, kind: TopicKind, items: Vec<String>, weights: Option<Vec<f64>>) -> Result<Self> {
        let r = Self {
            tid,
            kind,
            items,
            weights,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::InsufficientMaterial(format!(
                "topic {} has no {} items",
                self.tid, self.kind
            )));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.items.len() || w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Invalid(format!(
                    "topic {} weights must be positive and parallel to items",
                    self.tid
                )));
            }
        }
        Ok(())
    }

    /// Words representation from the topic's `top_n` highest-weight words.
    pub fn words_from_artifacts(artifacts: &TopicModelArtifacts, tid: TopicId, top_n: usize) -> Result<Self> {
        let words = artifacts.top_words(tid, top_n)?;
        Self::new(
            tid,
            TopicKind::Words,
            words.iter().map(|(w, _)| w.clone()).collect(),
            Some(words.iter().map(|(_, p)| *p).collect()),
        )
    }

    fn render(&self, rng: &mut SeededRng) -> String {
        match self.kind {
            TopicKind::Words => {
                let count = 8 + rng.below(8);
                let mut words = Vec::with_capacity(count);
                for _ in 0..count {
                    let i = match &self.weights {
                        Some(w) => rng.weighted_index(w),
                        None => rng.below(self.items.len()),
                    };
                    words.push(self.items[i].as_str());
                }
                words.join(" ")
            }
            TopicKind::NGrams | TopicKind::Descriptions => {
                self.items[rng.below(self.items.len())].clone()
            }
            TopicKind::Documents => {
                let doc = &self.items[rng.below(self.items.len())];
                doc.split_whitespace()
                    .take(DOCUMENT_TOKENS)
                    .collect::<Vec<_>>()
                    .join(" ")
            }
        }
    }
}

/// Reads `tid<TAB>kind<TAB>item[<TAB>weight]` lines into one representation
/// per (topic, kind). Blank lines and `#` comments are skipped.
pub fn load_topic_representations(path: &Path) -> Result<Vec<TopicRepresentation>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut reps: Vec<TopicRepresentation> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(Error::parse(path, i + 1, "expected tid, kind, item[, weight]"));
        }
        let tid: TopicId = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, "bad topic id"))?;
        let kind: TopicKind = fields[1].parse().map_err(|e: Error| Error::parse(path, i + 1, e.to_string()))?;
        let weight = match fields.get(3) {
            Some(w) => Some(
                w.parse::<f64>()
                    .map_err(|_| Error::parse(path, i + 1, "bad weight"))?,
            ),
            None => None,
        };
        let rep = match reps.iter_mut().find(|r| r.tid == tid && r.kind == kind) {
            Some(r) => r,
            None => {
                reps.push(TopicRepresentation {
                    tid,
                    kind,
                    items: Vec::new(),
                    weights: weight.map(|_| Vec::new()),
                });
                reps.last_mut().expect("just pushed")
            }
        };
        match (&mut rep.weights, weight) {
            (Some(ws), Some(w)) => ws.push(w),
            (None, None) => {}
            _ => return Err(Error::parse(path, i + 1, "weights must be given for all items or none")),
        }
        rep.items.push(unescape(fields[2]));
    }
    for r in &reps {
        r.validate()?;
    }
    Ok(reps)
}

/// Topic pairs: positives render `target`, negatives render a seed-chosen
/// contrast topic of the same kind.
pub fn build_topic_pairs(
    target: &TopicRepresentation,
    contrast_pool: &[TopicRepresentation],
    n: usize,
    seed: u64,
) -> Result<PairDataset> {
    if n == 0 {
        return Err(Error::Invalid("pair count must be at least 1".into()));
    }
    target.validate()?;
    if contrast_pool.iter().any(|r| r.tid == target.tid) {
        return Err(Error::Invalid(format!(
            "contrast pool contains the target topic {}",
            target.tid
        )));
    }
    let pool: Vec<&TopicRepresentation> = contrast_pool
        .iter()
        .filter(|r| r.kind == target.kind && !r.items.is_empty())
        .collect();
    if pool.is_empty() {
        return Err(Error::InsufficientMaterial(format!(
            "no contrast topics of kind {}",
            target.kind
        )));
    }
    let mut rng = SeededRng::new(seed);
    let behavior = Behavior::Topic(target.tid);
    let pairs = (0..n)
        .map(|i| {
            let positive = target.render(&mut rng);
            let contrast = pool[rng.below(pool.len())];
            let negative = contrast.render(&mut rng);
            ContrastPair::new(format!("topic{}-{:05}", target.tid, i), positive, negative)
        })
        .collect();
    let contrast_ids: Vec<String> = pool.iter().map(|r| r.tid.to_string()).collect();
    PairDataset::new(
        behavior,
        pairs,
        format!(
            "topic pairs: target {} ({}) vs topics [{}], n={n}, seed={seed}",
            target.tid,
            target.kind,
            contrast_ids.join(",")
        ),
    )
}

fn dedup_pool(texts: &[String]) -> Vec<String> {
    let mut v: Vec<String> = texts.iter().filter(|t| !t.trim().is_empty()).cloned().collect();
    v.sort();
    v.dedup();
    v.sort_by(|a, b| a.chars().count().cmp(&b.chars().count()).then_with(|| a.cmp(b)));
    v
}

fn length_balanced(a: &str, b: &str) -> bool {
    let (la, lb) = (a.chars().count() as f64, b.chars().count() as f64);
    (la - lb).abs() <= MAX_LENGTH_IMBALANCE * la.max(lb)
}

/// Polar pairs from positive and negative pools.
///
/// Pools are deduplicated, then ordered by (length, text). Positives are
/// drawn as seeded permutations of the pool; each is matched to the negative
/// at the same relative length rank, so the longest positive meets the
/// longest negative. Pairs outside the 30% length tolerance are reported in
/// the provenance rather than rejected.
pub fn build_polar_pairs(
    behavior: Behavior,
    positive_texts: &[String],
    negative_texts: &[String],
    n: usize,
    seed: u64,
) -> Result<PairDataset> {
    if n == 0 {
        return Err(Error::Invalid("pair count must be at least 1".into()));
    }
    let pos = dedup_pool(positive_texts);
    let neg = dedup_pool(negative_texts);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InsufficientMaterial(
            "positive and negative pools must both be nonempty".into(),
        ));
    }
    let mut rng = SeededRng::new(seed);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    while order.len() < n {
        let mut perm: Vec<usize> = (0..pos.len()).collect();
        rng.shuffle(&mut perm);
        order.extend(perm.into_iter().take(n - order.len()));
    }
    let mut imbalanced = 0;
    let pairs: Vec<ContrastPair> = order
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let j = match_rank(r, &pos, &neg);
            if !length_balanced(&pos[r], &neg[j]) {
                imbalanced += 1;
            }
            ContrastPair::new(format!("{}-{:05}", behavior, i), pos[r].clone(), neg[j].clone())
        })
        .collect();
    let mut provenance = format!(
        "polar pairs: {} positives, {} negatives after dedup, n={n}, seed={seed}, length-rank matched",
        pos.len(),
        neg.len()
    );
    if imbalanced > 0 {
        provenance.push_str(&format!(
            "; warning: {imbalanced} of {n} pairs exceed the 30% length tolerance"
        ));
    }
    PairDataset::new(behavior, pairs, provenance)
}

fn match_rank(r: usize, pos: &[String], neg: &[String]) -> usize {
    if pos.len() == 1 {
        let len = pos[0].chars().count() as i64;
        return (0..neg.len())
            .min_by_key(|&j| (neg[j].chars().count() as i64 - len).abs())
            .expect("nonempty negatives");
    }
    let q = r as f64 / (pos.len() - 1) as f64;
    (q * (neg.len() - 1) as f64).round() as usize
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

pub fn pairs_to_string(dataset: &PairDataset) -> String {
    let mut out = format!(
        "{PAIRS_FORMAT}\t{}\t{}\n",
        dataset.behavior,
        escape(&dataset.provenance)
    );
    for p in &dataset.pairs {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            escape(&p.pair_id),
            escape(&p.positive),
            escape(&p.negative)
        ));
    }
    out
}

pub fn save_pairs(dataset: &PairDataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    fs::write(path, pairs_to_string(dataset)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_pairs(path: &Path) -> Result<PairDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_pairs(&text, path)
}

pub fn parse_pairs(text: &str, path: &Path) -> Result<PairDataset> {
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::corrupt(path, "empty file"))?;
    let head: Vec<&str> = header.split('\t').collect();
    if head.first() != Some(&PAIRS_FORMAT) || head.len() != 3 {
        return Err(Error::parse(path, 1, format!("expected `{PAIRS_FORMAT}<TAB>behavior<TAB>provenance` header")));
    }
    let behavior: Behavior = head[1].parse().map_err(|e: Error| Error::parse(path, 1, e.to_string()))?;
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, line_no, format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let pair = ContrastPair::new(unescape(fields[0]), unescape(fields[1]), unescape(fields[2]));
        if pair.pair_id.is_empty() || pair.positive.is_empty() || pair.negative.is_empty() {
            return Err(Error::parse(path, line_no, "pair_id and both texts must be nonempty"));
        }
        if !seen.insert(pair.pair_id.clone()) {
            return Err(Error::parse(path, line_no, format!("duplicate pair_id `{}`", pair.pair_id)));
        }
        pairs.push(pair);
    }
    PairDataset::new(behavior, pairs, unescape(head[2]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(tid: TopicId, items: &[&str]) -> TopicRepresentation {
        TopicRepresentation::new(tid, TopicKind::Words, items.iter().map(|s| s.to_string()).collect(), None).unwrap()
    }

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn words_positives_use_only_target_lexicon() {
        let target = words(
            200,
            &["children", "child", "parents", "birth", "born", "kids", "families", "mother"],
        );
        let sports = words(7, &["goal", "match", "league", "striker", "season"]);
        let d = build_topic_pairs(&target, &[sports], 20, 3).unwrap();
        assert_eq!(d.pairs.len(), 20);
        for p in &d.pairs {
            let n = p.positive.split(' ').count();
            assert!((8..=15).contains(&n));
            assert!(p.positive.split(' ').all(|w| target.items.iter().any(|t| t == w)));
            assert!(p.negative.split(' ').all(|w| !target.items.iter().any(|t| t == w)));
        }
    }

    #[test]
    fn single_item_pools_force_the_pair() {
        let t = TopicRepresentation::new(1, TopicKind::Descriptions, strings(&["about kids"]), None).unwrap();
        let c = TopicRepresentation::new(2, TopicKind::Descriptions, strings(&["about goals"]), None).unwrap();
        let d = build_topic_pairs(&t, &[c], 1, 0).unwrap();
        assert_eq!(d.pairs, vec![ContrastPair::new("topic1-00000", "about kids", "about goals")]);
    }

    #[test]
    fn topic_pairs_are_seed_deterministic() {
        let t = words(1, &["a", "b", "c"]);
        let pool = vec![words(2, &["x"]), words(3, &["y"]), words(4, &["z"])];
        let a = build_topic_pairs(&t, &pool, 30, 11).unwrap();
        let b = build_topic_pairs(&t, &pool, 30, 11).unwrap();
        let c = build_topic_pairs(&t, &pool, 30, 12).unwrap();
        assert_eq!(a, b);
        let negs = |d: &PairDataset| d.pairs.iter().map(|p| p.negative.clone()).collect::<Vec<_>>();
        assert_ne!(negs(&a), negs(&c));
    }

    #[test]
    fn topic_pairs_never_cross_kinds() {
        let t = words(1, &["a"]);
        let docs = TopicRepresentation::new(2, TopicKind::Documents, strings(&["long doc"]), None).unwrap();
        assert!(matches!(
            build_topic_pairs(&t, &[docs], 1, 0),
            Err(Error::InsufficientMaterial(_))
        ));
        assert!(build_topic_pairs(&t, &[words(1, &["b"])], 1, 0).is_err());
    }

    #[test]
    fn document_snippets_are_truncated() {
        let long: Vec<String> = (0..400).map(|i| format!("w{i}")).collect();
        let t = TopicRepresentation::new(1, TopicKind::Documents, vec![long.join(" ")], None).unwrap();
        let c = TopicRepresentation::new(2, TopicKind::Documents, strings(&["short"]), None).unwrap();
        let d = build_topic_pairs(&t, &[c], 1, 0).unwrap();
        assert_eq!(d.pairs[0].positive.split(' ').count(), 256);
    }

    #[test]
    fn polar_single_pair() {
        let d = build_polar_pairs(Behavior::Sentiment, &strings(&["great"]), &strings(&["awful"]), 1, 0).unwrap();
        assert_eq!(d.pairs.len(), 1);
        assert_eq!((d.pairs[0].positive.as_str(), d.pairs[0].negative.as_str()), ("great", "awful"));
    }

    #[test]
    fn polar_long_outlier_meets_longest_negative() {
        let outlier = "this is a very long positive text that stands far apart from the rest".to_string();
        let pos = vec!["good day".to_string(), "nice one".to_string(), outlier.clone()];
        let neg = strings(&["bad day", "awful one", "a long and miserable afternoon"]);
        let d = build_polar_pairs(Behavior::Sentiment, &pos, &neg, 3, 5).unwrap();
        let longest_neg = neg.iter().max_by_key(|s| s.len()).unwrap();
        for p in &d.pairs {
            if p.positive == outlier {
                assert_eq!(&p.negative, longest_neg);
            }
        }
        assert!(d.pairs.iter().any(|p| p.positive == outlier));
    }

    #[test]
    fn polar_pools_are_deduplicated() {
        let pos = strings(&["good", "good", "good"]);
        let neg = strings(&["bad", "bad"]);
        let d = build_polar_pairs(Behavior::Sentiment, &pos, &neg, 2, 0).unwrap();
        assert!(d.provenance.contains("1 positives, 1 negatives"));
    }

    #[test]
    fn pairs_round_trip_with_escapes() {
        let d = PairDataset::new(
            Behavior::Toxicity,
            vec![
                ContrastPair::new("a", "tab\there", "line\nbreak"),
                ContrastPair::new("b", "back\\slash", "cr\rchar"),
            ],
            "hand\tmade",
        )
        .unwrap();
        let back = parse_pairs(&pairs_to_string(&d), Path::new("mem")).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn crlf_and_lf_parse_identically() {
        let lf = "caa-pairs/1\tsentiment\tx\np1\tgood\tbad\np2\tnice\tawful\n";
        let crlf = lf.replace('\n', "\r\n");
        let a = parse_pairs(lf, Path::new("lf")).unwrap();
        let b = parse_pairs(&crlf, Path::new("crlf")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_ids_and_malformed_lines_name_the_line() {
        let dup = "caa-pairs/1\tsentiment\tx\np1\tgood\tbad\np1\tnice\tawful\n";
        match parse_pairs(dup, Path::new("f")) {
            Err(Error::Parse { line: 3, reason, .. }) => assert!(reason.contains("duplicate")),
            other => panic!("{other:?}"),
        }
        let bad = "caa-pairs/1\tsentiment\tx\np1\tgood\n";
        assert!(matches!(parse_pairs(bad, Path::new("f")), Err(Error::Parse { line: 2, .. })));
    }
}
