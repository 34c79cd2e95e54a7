//! NEWTS records, LDA artifacts and seeded article sampling.
//!
//! `newts-records/1`: the first line is the literal `newts-records/1`; every
//! following nonblank line is one JSON object with the fields of
//! [`NewtsRecord`].
//!
//! `lda-artifacts/1` is a directory:
//!
//! - `topic_words.tsv`: header `lda-artifacts/1<TAB>num_topics=<K>`, then `tid<TAB>word<TAB>weight`
//! - `dictionary.tsv`: `word<TAB>id`
//! - `descriptions.tsv` (optional): `tid<TAB>description`
//!
//! Sampling sorts records by `article_id`, runs the [`SeededRng`] Fisher–Yates
//! shuffle over them, keeps the first `n` and re-sorts those by `article_id`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::behavior::TopicId;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

const RECORDS_FORMAT: &str = "newts-records/1";
const ARTIFACTS_FORMAT: &str = "lda-artifacts/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewtsRecord {
    pub article_id: String,
    pub article: String,
    pub summary1: String,
    pub tid1: TopicId,
    pub summary2: String,
    pub tid2: TopicId,
}

impl NewtsRecord {
    /// Checks the record; `num_topics` bounds the topic ids when known.
    pub fn validate(&self, num_topics: Option<usize>) -> std::result::Result<(), String> {
        for (name, v) in [
            ("article_id", &self.article_id),
            ("article", &self.article),
            ("summary1", &self.summary1),
            ("summary2", &self.summary2),
        ] {
            if v.trim().is_empty() {
                return Err(format!("empty field `{name}`"));
            }
        }
        if self.tid1 == self.tid2 {
            return Err(format!("tid1 and tid2 are both {}", self.tid1));
        }
        if let Some(k) = num_topics {
            for t in [self.tid1, self.tid2] {
                if t as usize >= k {
                    return Err(format!("unknown topic id {t} (model has {k} topics)"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// Published size of the full split.
    pub fn expected_len(self) -> usize {
        match self {
            Split::Train => 2400,
            Split::Test => 600,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("unknown split `{other}` (expected train or test)"))),
        }
    }
}

pub fn records_to_string(records: &[NewtsRecord]) -> String {
    let mut out = format!("{RECORDS_FORMAT}\n");
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn save_newts(records: &[NewtsRecord], path: &Path) -> Result<()> {
    fs::write(path, records_to_string(records)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Loads and validates a record file. Set `full_split` when the file is
/// expected to hold a complete split; a size mismatch is then logged.
pub fn load_newts(
    path: &Path,
    split: Split,
    num_topics: Option<usize>,
    full_split: bool,
) -> Result<Vec<NewtsRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let records = parse_newts(&text, path, num_topics)?;
    log::info!("loaded {} {split} records from {}", records.len(), path.display());
    if full_split && records.len() != split.expected_len() {
        log::warn!(
            "{split} split has {} records, expected {}",
            records.len(),
            split.expected_len()
        );
    }
    Ok(records)
}

pub fn parse_newts(text: &str, path: &Path, num_topics: Option<usize>) -> Result<Vec<NewtsRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim_end() == RECORDS_FORMAT => {}
        _ => return Err(Error::parse(path, 1, format!("expected `{RECORDS_FORMAT}` header"))),
    }
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let rec: NewtsRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        rec.validate(num_topics).map_err(|reason| Error::parse(path, i + 1, reason))?;
        if !seen.insert(rec.article_id.clone()) {
            return Err(Error::parse(path, i + 1, format!("duplicate article_id `{}`", rec.article_id)));
        }
        records.push(rec);
    }
    Ok(records)
}

/// Converts the dataset's CSV release. Columns are found by header name;
/// the id column may be called `article_id`, `docId` or `id`.
pub fn convert_newts_csv(path: &Path) -> Result<Vec<NewtsRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::corrupt(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let col = |names: &[&str]| -> Result<usize> {
        headers
            .iter()
            .position(|h| names.contains(&h.trim()))
            .ok_or_else(|| Error::parse(path, 1, format!("missing column `{}`", names[0])))
    };
    let id = col(&["article_id", "docId", "id"])?;
    let article = col(&["article"])?;
    let s1 = col(&["summary1"])?;
    let s2 = col(&["summary2"])?;
    let t1 = col(&["tid1"])?;
    let t2 = col(&["tid2"])?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let tid = |c: usize| -> Result<TopicId> {
            let v = row.get(c).unwrap_or("").trim();
            // Some exports write integer columns as floats.
            v.parse::<TopicId>()
                .or_else(|_| match v.parse::<f64>() {
                    Ok(f) if f.fract() == 0.0 && f >= 0.0 => Ok(f as TopicId),
                    _ => Err(()),
                })
                .map_err(|_| Error::parse(path, line, format!("bad topic id `{v}`")))
        };
        let rec = NewtsRecord {
            article_id: row.get(id).unwrap_or("").trim().to_string(),
            article: row.get(article).unwrap_or("").to_string(),
            summary1: row.get(s1).unwrap_or("").to_string(),
            tid1: tid(t1)?,
            summary2: row.get(s2).unwrap_or("").to_string(),
            tid2: tid(t2)?,
        };
        rec.validate(None).map_err(|reason| Error::parse(path, line, reason))?;
        if !seen.insert(rec.article_id.clone()) {
            return Err(Error::parse(path, line, format!("duplicate article_id `{}`", rec.article_id)));
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSample {
    pub records: Vec<NewtsRecord>,
    pub seed: u64,
    pub source_split: Split,
}

pub fn sample_articles(records: &[NewtsRecord], n: usize, seed: u64, split: Split) -> Result<CorpusSample> {
    if n == 0 || n > records.len() {
        return Err(Error::OutOfRange {
            value: n.to_string(),
            reason: format!("sample size must be in [1, {}]", records.len()),
        });
    }
    let mut sorted: Vec<&NewtsRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.article_id.cmp(&b.article_id));
    if sorted.windows(2).any(|w| w[0].article_id == w[1].article_id) {
        return Err(Error::Invalid("duplicate article_id in records".into()));
    }
    SeededRng::new(seed).shuffle(&mut sorted);
    let mut chosen: Vec<NewtsRecord> = sorted.into_iter().take(n).cloned().collect();
    chosen.sort_by(|a, b| a.article_id.cmp(&b.article_id));
    Ok(CorpusSample {
        records: chosen,
        seed,
        source_split: split,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModelArtifacts {
    num_topics: usize,
    topic_words: Vec<Vec<(String, f64)>>,
    dictionary: BTreeMap<String, u32>,
    descriptions: HashMap<TopicId, String>,
    word_weights: Vec<HashMap<String, f64>>,
}

impl TopicModelArtifacts {
    /// Builds validated artifacts; word lists are re-sorted by descending
    /// weight, ties by word.
    pub fn new(
        topic_words: Vec<Vec<(String, f64)>>,
        dictionary: BTreeMap<String, u32>,
        descriptions: HashMap<TopicId, String>,
    ) -> Result<Self> {
        let num_topics = topic_words.len();
        if num_topics == 0 {
            return Err(Error::InsufficientMaterial("topic model has no topics".into()));
        }
        let mut sorted = topic_words;
        for (tid, words) in sorted.iter_mut().enumerate() {
            if words.is_empty() {
                return Err(Error::InsufficientMaterial(format!("topic {tid} has no words")));
            }
            if let Some((w, p)) = words.iter().find(|(_, p)| !(p.is_finite() && *p > 0.0)) {
                return Err(Error::Invalid(format!("topic {tid}: non-positive weight {p} for `{w}`")));
            }
            words.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let mut seen = HashSet::new();
            if let Some((w, _)) = words.iter().find(|(w, _)| !seen.insert(w.as_str())) {
                return Err(Error::Invalid(format!("topic {tid}: word `{w}` listed twice")));
            }
        }
        let mut ids = HashSet::new();
        if let Some((w, id)) = dictionary.iter().find(|(_, id)| !ids.insert(**id)) {
            return Err(Error::Invalid(format!("dictionary id {id} reused by `{w}`")));
        }
        if let Some(t) = descriptions.keys().find(|t| **t as usize >= num_topics) {
            return Err(Error::Invalid(format!("description for unknown topic {t}")));
        }
        let word_weights = sorted
            .iter()
            .map(|ws| ws.iter().cloned().collect())
            .collect();
        Ok(Self {
            num_topics,
            topic_words: sorted,
            dictionary,
            descriptions,
            word_weights,
        })
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn dictionary(&self) -> &BTreeMap<String, u32> {
        &self.dictionary
    }

    fn check_tid(&self, tid: TopicId) -> Result<usize> {
        let t = tid as usize;
        if t >= self.num_topics {
            return Err(Error::OutOfRange {
                value: tid.to_string(),
                reason: format!("topic id must be below {}", self.num_topics),
            });
        }
        Ok(t)
    }

    /// All words of a topic, descending weight.
    pub fn topic_words(&self, tid: TopicId) -> Result<&[(String, f64)]> {
        Ok(&self.topic_words[self.check_tid(tid)?])
    }

    pub fn top_words(&self, tid: TopicId, n: usize) -> Result<&[(String, f64)]> {
        let words = self.topic_words(tid)?;
        Ok(&words[..n.min(words.len())])
    }

    /// φ_{tid,word}; zero for words outside the topic's list.
    pub fn weight(&self, tid: usize, word: &str) -> f64 {
        self.word_weights[tid].get(word).copied().unwrap_or(0.0)
    }

    pub fn description(&self, tid: TopicId) -> Option<&str> {
        self.descriptions.get(&tid).map(String::as_str)
    }

    /// Text used for topic prompts: the shipped description, otherwise the
    /// ten highest-weight words joined by ", ".
    pub fn prompt_description(&self, tid: TopicId) -> Result<String> {
        if let Some(d) = self.description(tid) {
            return Ok(d.to_string());
        }
        Ok(self
            .top_words(tid, 10)?
            .iter()
            .map(|(w, _)| w.as_str())
            .collect::<Vec<_>>()
            .join(", "))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let mut tw = format!("{ARTIFACTS_FORMAT}\tnum_topics={}\n", self.num_topics);
        for (tid, words) in self.topic_words.iter().enumerate() {
            for (w, p) in words {
                tw.push_str(&format!("{tid}\t{w}\t{p:?}\n"));
            }
        }
        let mut dict = String::new();
        for (w, id) in &self.dictionary {
            dict.push_str(&format!("{w}\t{id}\n"));
        }
        let write = |name: &str, body: &str| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(format!("writing {}", p.display()), e))
        };
        write("topic_words.tsv", &tw)?;
        write("dictionary.tsv", &dict)?;
        if !self.descriptions.is_empty() {
            let mut tids: Vec<_> = self.descriptions.keys().copied().collect();
            tids.sort_unstable();
            let body: String = tids
                .iter()
                .map(|t| format!("{t}\t{}\n", self.descriptions[t]))
                .collect();
            write("descriptions.tsv", &body)?;
        }
        Ok(())
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

pub fn load_topic_model(dir: &Path) -> Result<TopicModelArtifacts> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::io(format!("reading {}", p.display()), e))
    };
    let tw_path = dir.join("topic_words.tsv");
    let tw = read("topic_words.tsv")?;
    let mut lines = data_lines(&tw);
    let num_topics: usize = match lines.next() {
        Some((_, h)) => {
            let mut parts = h.split('\t');
            let k = (parts.next() == Some(ARTIFACTS_FORMAT))
                .then(|| parts.next().and_then(|f| f.strip_prefix("num_topics=")))
                .flatten()
                .and_then(|k| k.parse().ok());
            k.ok_or_else(|| {
                Error::parse(&tw_path, 1, format!("expected `{ARTIFACTS_FORMAT}<TAB>num_topics=K` header"))
            })?
        }
        None => return Err(Error::corrupt(&tw_path, "empty file")),
    };
    let mut topic_words = vec![Vec::new(); num_topics];
    for (line, l) in lines {
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::parse(&tw_path, line, "expected tid, word, weight"));
        }
        let tid: usize = f[0].parse().map_err(|_| Error::parse(&tw_path, line, "bad topic id"))?;
        if tid >= num_topics {
            return Err(Error::parse(&tw_path, line, format!("topic {tid} outside num_topics={num_topics}")));
        }
        let weight: f64 = f[2].parse().map_err(|_| Error::parse(&tw_path, line, "bad weight"))?;
        topic_words[tid].push((f[1].to_string(), weight));
    }

    let dict_path = dir.join("dictionary.tsv");
    let mut dictionary = BTreeMap::new();
    for (line, l) in data_lines(&read("dictionary.tsv")?) {
        let (w, id) = l
            .split_once('\t')
            .ok_or_else(|| Error::parse(&dict_path, line, "expected word, id"))?;
        let id: u32 = id.trim().parse().map_err(|_| Error::parse(&dict_path, line, "bad id"))?;
        if dictionary.insert(w.to_string(), id).is_some() {
            return Err(Error::parse(&dict_path, line, format!("word `{w}` listed twice")));
        }
    }

    let mut descriptions = HashMap::new();
    let desc_path = dir.join("descriptions.tsv");
    if desc_path.exists() {
        for (line, l) in data_lines(&read("descriptions.tsv")?) {
            let (t, d) = l
                .split_once('\t')
                .ok_or_else(|| Error::parse(&desc_path, line, "expected tid, description"))?;
            let t: TopicId = t.parse().map_err(|_| Error::parse(&desc_path, line, "bad topic id"))?;
            descriptions.insert(t, d.trim().to_string());
        }
    }
    TopicModelArtifacts::new(topic_words, dictionary, descriptions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, t1: TopicId, t2: TopicId) -> NewtsRecord {
        NewtsRecord {
            article_id: id.into(),
            article: format!("article {id}"),
            summary1: "first".into(),
            tid1: t1,
            summary2: "second".into(),
            tid2: t2,
        }
    }

    #[test]
    fn records_round_trip() {
        let rs = vec![rec("a", 0, 1), rec("b", 1, 0), rec("c", 0, 1)];
        let back = parse_newts(&records_to_string(&rs), Path::new("m"), Some(2)).unwrap();
        assert_eq!(back, rs);
    }

    #[test]
    fn unknown_or_equal_tids_name_the_line() {
        let text = records_to_string(&[rec("a", 0, 1), rec("b", 99, 1)]);
        assert!(matches!(parse_newts(&text, Path::new("m"), Some(50)), Err(Error::Parse { line: 3, .. })));
        let text = records_to_string(&[rec("a", 4, 4)]);
        assert!(matches!(parse_newts(&text, Path::new("m"), None), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn sampling_is_canonical_and_seeded() {
        let rs: Vec<_> = (0..100).map(|i| rec(&format!("{i:03}"), 0, 1)).collect();
        let all = sample_articles(&rs, 100, 9, Split::Train).unwrap();
        assert_eq!(all.records, rs);
        let a = sample_articles(&rs, 10, 1, Split::Train).unwrap();
        assert_eq!(a, sample_articles(&rs, 10, 1, Split::Train).unwrap());
        assert_ne!(a.records, sample_articles(&rs, 10, 2, Split::Train).unwrap().records);
        assert!(sample_articles(&rs, 101, 1, Split::Train).is_err());
    }

    #[test]
    fn artifacts_sort_and_validate() {
        let a = TopicModelArtifacts::new(
            vec![vec![("b".into(), 0.1), ("a".into(), 0.6)], vec![("c".into(), 1.0)]],
            BTreeMap::new(),
            HashMap::new(),
        )
        .unwrap();
        assert_eq!(a.topic_words(0).unwrap()[0].0, "a");
        assert_eq!(a.prompt_description(0).unwrap(), "a, b");
        let bad = TopicModelArtifacts::new(vec![vec![("a".into(), 0.0)]], BTreeMap::new(), HashMap::new());
        assert!(bad.unwrap_err().to_string().contains("topic 0"));
        let empty = TopicModelArtifacts::new(vec![vec![("a".into(), 1.0)], vec![]], BTreeMap::new(), HashMap::new());
        assert!(empty.unwrap_err().to_string().contains("topic 1"));
    }

    #[test]
    fn artifacts_round_trip_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut dict = BTreeMap::new();
        dict.insert("a".to_string(), 0);
        dict.insert("c".to_string(), 1);
        let mut desc = HashMap::new();
        desc.insert(1, "about c".to_string());
        let a = TopicModelArtifacts::new(
            vec![vec![("a".into(), 0.7)], vec![("c".into(), 0.25)]],
            dict,
            desc,
        )
        .unwrap();
        a.save(dir.path()).unwrap();
        assert_eq!(load_topic_model(dir.path()).unwrap(), a);
    }
}
