use std::fmt;
use std::path::Path;

use anyhow::Result;

use steerlab_core::model::{BigramModel, DecodeMode, LanguageModel, PositionPolicy, SubprocessModel, TinyModel, REFERENCE_ALPHABET};
use steerlab_core::scorers::LemmaMode;
use steerlab_core::experiment::{AdapterConfig, MetricGroup, ScoringConfig};
use steerlab_core::metrics::RougeOptions;

use crate::{GenerationArgs, ScoringArgs};

/// A usage or validation failure detected by the CLI itself (exit 2).
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

pub fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} is not a directory", path.display())))
    }
}

/// Core parse errors keep their own exit class.
pub fn parse<T>(s: &str) -> Result<T>
where
    T: std::str::FromStr<Err = steerlab_core::Error>,
{
    Ok(s.parse::<T>()?)
}

/// `tiny` (reference weights), `uniform` (uniform next-character model),
/// `adapter:<command> [args]` (a `model/1` server), or a tiny-model fixture.
pub fn load_model(spec: &str) -> Result<Box<dyn LanguageModel>> {
    if spec == "tiny" {
        return Ok(Box::new(TinyModel::reference()));
    }
    if spec == "uniform" {
        return Ok(Box::new(BigramModel::uniform(REFERENCE_ALPHABET)));
    }
    if let Some(cmd) = spec.strip_prefix("adapter:") {
        let mut parts = cmd.split_whitespace();
        let program = parts.next().ok_or_else(|| usage("empty model adapter command"))?;
        let args: Vec<String> = parts.map(str::to_string).collect();
        return Ok(Box::new(SubprocessModel::spawn(program, &args)?));
    }
    let path = Path::new(spec);
    if path.is_file() {
        return Ok(Box::new(TinyModel::load(path)?));
    }
    Err(usage(format!(
        "model `{spec}` is not `tiny`, `uniform`, `adapter:<command>` or an existing fixture file"
    )))
}

impl GenerationArgs {
    pub fn decode(&self, seed: u64) -> Result<DecodeMode> {
        Ok(match self.temperature {
            None => DecodeMode::Greedy,
            Some(t) if t.is_finite() && t > 0.0 => DecodeMode::SeededSampling { temperature: t, seed },
            Some(t) => return Err(usage(format!("temperature must be positive, got {t}"))),
        })
    }

    pub fn policy(&self) -> Result<PositionPolicy> {
        parse(&self.policy)
    }
}

impl ScoringArgs {
    pub fn to_config(&self) -> Result<ScoringConfig> {
        let lemma_mode: LemmaMode = self.lemma_mode()?;
        Ok(ScoringConfig {
            groups: MetricGroup::parse_list(&self.metrics)?,
            rouge: RougeOptions { stem: self.stem },
            lemma_mode,
            adapters: AdapterConfig {
                sentiment: self.sentiment_adapter.clone(),
                toxicity: self.toxicity_adapter.clone(),
                readability_signed: self.readability_adapter.clone(),
                readability_grade: self.readability_grade_adapter.clone(),
                embedder: self.embedder_adapter.clone(),
            },
        })
    }
}
