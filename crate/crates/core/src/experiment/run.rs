//! Sweep execution and the `runrec/1` result file.
//!
//! `results.jsonl` starts with a header line
//! `{"format":"runrec/1","config_hash":…,"articles":…,"cells":…}` followed by
//! one [`RunRow`] per (article, cell) in canonical order: articles as sampled,
//! cells as planned. Rows never carry timestamps; wall-clock per row goes to
//! `timings.tsv` and run-level metadata to `manifest.json`.
//!
//! Resuming drops an incomplete trailing line, checks the header against the
//! current configuration and continues after the last complete row.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::score::Scorers;
use super::{dedup_cells, Cell, Mode, RunConfig};
use crate::behavior::{Behavior, BehaviorKind};
use crate::error::{Error, Result};
use crate::model::{DecodeMode, GenerationConfig, LanguageModel};
use crate::newts::{CorpusSample, NewtsRecord, TopicModelArtifacts};
use crate::prompt::{render, PromptRequest, PromptVariant};
use crate::scorers::Lexicon;
use crate::steering::{make_intervention, SteeringSpec, SteeringVector};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.tsv";
const RESULTS_FORMAT: &str = "runrec/1";
const MAX_ERROR_SHARE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub article_id: String,
    pub cell: usize,
    pub lambda: f64,
    pub variant: PromptVariant,
    pub modes: Vec<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<usize>,
    #[serde(default)]
    pub metrics: BTreeMap<String, Option<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct RunInputs<'a> {
    pub model: &'a dyn LanguageModel,
    /// Perplexity scorer; the generation model when `None`.
    pub perplexity_model: Option<&'a dyn LanguageModel>,
    pub vectors: Vec<SteeringVector>,
    pub sample: &'a CorpusSample,
    pub artifacts: Option<&'a TopicModelArtifacts>,
    pub lexicon: Lexicon,
}

#[derive(Debug, Clone)]
pub struct ExecuteOptions {
    pub output_dir: PathBuf,
    pub workers: usize,
    /// Continue an existing result file; otherwise start over.
    pub resume: bool,
    /// Stop once the file holds this many rows. Used to simulate interruption.
    pub max_rows: Option<usize>,
}

impl ExecuteOptions {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            output_dir: output_dir.into(),
            workers: 1,
            resume: true,
            max_rows: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub results_path: PathBuf,
    pub total_rows: usize,
    pub rows_in_file: usize,
    pub error_rows: usize,
    pub complete: bool,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn config_hash(config: &RunConfig, records: &[NewtsRecord]) -> String {
    let ids: Vec<&str> = records.iter().map(|r| r.article_id.as_str()).collect();
    let canon = serde_json::to_string(&json!({"config": config, "articles": ids})).expect("config serializes");
    hex::encode(Sha256::digest(canon.as_bytes()))
}

/// Reads complete rows of an existing result file, truncating a partial
/// trailing line. Returns `None` when there is no usable file.
fn prepare_resume(path: &Path, header: &str) -> Result<Option<Vec<RunRow>>> {
    let Ok(bytes) = fs::read(path) else {
        return Ok(None);
    };
    let complete = match bytes.iter().rposition(|b| *b == b'\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if complete < bytes.len() {
        log::warn!("dropping {} bytes of an incomplete row", bytes.len() - complete);
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        f.set_len(complete as u64)
            .map_err(|e| Error::io(format!("truncating {}", path.display()), e))?;
    }
    let text = String::from_utf8_lossy(&bytes[..complete]);
    let mut lines = text.lines();
    match lines.next() {
        None => return Ok(None),
        Some(h) if h == header => {}
        Some(_) => {
            return Err(Error::Invalid(format!(
                "{} was produced by a different configuration; choose a fresh output directory",
                path.display()
            )))
        }
    }
    let rows = lines
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 2, e.to_string())))
        .collect::<Result<Vec<RunRow>>>()?;
    Ok(Some(rows))
}

struct Plan<'a> {
    config: &'a RunConfig,
    inputs: &'a RunInputs<'a>,
    cells: Vec<Cell>,
    vectors: HashMap<Behavior, &'a SteeringVector>,
}

impl Plan<'_> {
    fn request(&self, rec: &NewtsRecord, variant: PromptVariant) -> Result<PromptRequest> {
        let kind = self.config.behavior.kind();
        if kind != BehaviorKind::Topic || variant == PromptVariant::Neutral {
            return Ok(PromptRequest::new(kind, variant));
        }
        let artifacts = self
            .inputs
            .artifacts
            .ok_or_else(|| Error::Invalid("topic prompts need topic model artifacts".into()))?;
        let tid = if variant == PromptVariant::Encourage { rec.tid1 } else { rec.tid2 };
        Ok(PromptRequest::topic(variant, artifacts.prompt_description(tid)?))
    }

    fn vector_for(&self, rec: &NewtsRecord) -> Result<&SteeringVector> {
        let behavior = match self.config.behavior {
            Behavior::Topic(_) => Behavior::Topic(rec.tid1),
            b => b,
        };
        self.vectors
            .get(&behavior)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("no steering vector for {behavior}")))
    }

    fn generate(&self, rec: &NewtsRecord, cell: &Cell, task: usize) -> Result<(String, usize)> {
        let model = self.inputs.model;
        let prompt = render(&self.request(rec, cell.variant)?, &rec.article)?;
        let tokens = model.tokenize(&prompt.text);
        let mut interventions = Vec::new();
        if cell.lambda != 0.0 {
            let spec = SteeringSpec::new(self.vector_for(rec)?.clone(), cell.lambda).with_policy(self.config.policy);
            interventions.push(make_intervention(&spec, model.descriptor())?);
        }
        let decode = match self.config.decode {
            DecodeMode::Greedy => DecodeMode::Greedy,
            DecodeMode::SeededSampling { temperature, seed } => DecodeMode::SeededSampling {
                temperature,
                seed: seed ^ (task as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            },
        };
        let config = GenerationConfig {
            max_new_tokens: self.config.max_new_tokens,
            decode,
            stop_at_eos: true,
        };
        let g = model.generate(&tokens, &config, &interventions)?;
        Ok((g.text, g.tokens.len()))
    }

    fn row(&self, scorers: &Scorers, task: usize) -> RunRow {
        let n_cells = self.cells.len();
        let rec = &self.inputs.sample.records[task / n_cells];
        let cell = &self.cells[task % n_cells];
        let mut row = RunRow {
            article_id: rec.article_id.clone(),
            cell: task % n_cells,
            lambda: cell.lambda,
            variant: cell.variant,
            modes: cell.modes.clone(),
            summary: None,
            tokens: None,
            metrics: BTreeMap::new(),
            flags: Vec::new(),
            error: None,
        };
        match self.generate(rec, cell, task) {
            Ok((summary, tokens)) => {
                let scored = scorers.score(&summary, Some(rec));
                row.summary = Some(summary);
                row.tokens = Some(tokens);
                row.metrics = scored.metrics;
                row.flags = scored.flags;
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    }
}

fn write_manifest(dir: &Path, body: &serde_json::Value) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(body).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Runs every (article, cell) of the plan and appends rows to the result
/// file. Cells that fail become error rows; more than 10% error rows turns
/// into [`Error::RunFailed`] after the file is complete.
pub fn execute(config: &RunConfig, inputs: &RunInputs, options: &ExecuteOptions) -> Result<RunSummary> {
    config.validate()?;
    let descriptor = inputs.model.descriptor();
    if config.model_id != descriptor.model_id {
        return Err(Error::Compatibility(format!(
            "run is configured for `{}` but the model is `{}`",
            config.model_id, descriptor.model_id
        )));
    }
    descriptor.check_layer(config.layer)?;
    if inputs.sample.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut vectors = HashMap::new();
    for v in &inputs.vectors {
        v.check_compatible(descriptor)?;
        if v.layer != config.layer {
            return Err(Error::Compatibility(format!(
                "{} vector is for layer {} but the run steers layer {}",
                v.behavior, v.layer, config.layer
            )));
        }
        vectors.insert(v.behavior, v);
    }
    let steers = config.grid.iter().any(|x| *x != 0.0) && config.modes.iter().any(|m| *m != Mode::Prompt);
    if steers && !matches!(config.behavior, Behavior::Topic(_)) && !vectors.contains_key(&config.behavior) {
        return Err(Error::Invalid(format!("no steering vector for {}", config.behavior)));
    }
    let plan = Plan {
        config,
        inputs,
        cells: dedup_cells(&config.conditions()),
        vectors,
    };
    let records = &inputs.sample.records;
    let total = records.len() * plan.cells.len();

    let dir = &options.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let results_path = dir.join(RESULTS_FILE);
    let hash = config_hash(config, records);
    let header = serde_json::to_string(&json!({
        "format": RESULTS_FORMAT,
        "config_hash": hash,
        "articles": records.len(),
        "cells": plan.cells.len(),
    }))
    .expect("header serializes");

    let existing = if options.resume {
        prepare_resume(&results_path, &header)?
    } else {
        None
    };
    let mut prior_errors = 0;
    let start = match &existing {
        Some(rows) => {
            prior_errors = rows.iter().filter(|r| r.error.is_some()).count();
            rows.len()
        }
        None => {
            fs::write(&results_path, format!("{header}\n"))
                .map_err(|e| Error::io(format!("writing {}", results_path.display()), e))?;
            let _ = fs::remove_file(dir.join(TIMINGS_FILE));
            0
        }
    };
    if start > 0 {
        log::info!("resuming after {start} of {total} rows");
    }
    let end = options.max_rows.map_or(total, |m| m.min(total)).max(start);

    let started_at = now();
    let manifest = |status: &str, rows: usize, errors: usize| {
        json!({
            "format": RESULTS_FORMAT,
            "status": status,
            "config_hash": hash,
            "config": config,
            "seed": config.seed,
            "articles": records.iter().map(|r| &r.article_id).collect::<Vec<_>>(),
            "sample_seed": inputs.sample.seed,
            "split": inputs.sample.source_split,
            "cells": plan.cells,
            "total_rows": total,
            "rows_written": rows,
            "error_rows": errors,
            "started_at": started_at,
            "updated_at": now(),
            "version": env!("CARGO_PKG_VERSION"),
        })
    };
    write_manifest(dir, &manifest("running", start, prior_errors))?;

    let mut out = OpenOptions::new()
        .append(true)
        .open(&results_path)
        .map_err(|e| Error::io(format!("opening {}", results_path.display()), e))?;
    let mut timings = OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join(TIMINGS_FILE))
        .map_err(|e| Error::io("opening timings file", e))?;
    let mut new_errors = 0;
    let workers = options.workers.max(1).min((end - start).max(1));
    let next = AtomicUsize::new(start);
    let written: Result<usize> = thread::scope(|s| {
        let (tx, rx) = mpsc::channel::<Result<(usize, RunRow, f64)>>();
        for _ in 0..workers {
            let tx = tx.clone();
            let plan = &plan;
            let next = &next;
            s.spawn(move || {
                let scorers = match Scorers::new(
                    &config.scoring,
                    Some(inputs.perplexity_model.unwrap_or(inputs.model)),
                    inputs.artifacts,
                    inputs.lexicon.clone(),
                ) {
                    Ok(sc) => sc,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        return;
                    }
                };
                loop {
                    let task = next.fetch_add(1, Ordering::SeqCst);
                    if task >= end {
                        break;
                    }
                    let t0 = Instant::now();
                    let row = plan.row(&scorers, task);
                    if tx.send(Ok((task, row, t0.elapsed().as_secs_f64()))).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        let mut pending: BTreeMap<usize, (RunRow, f64)> = BTreeMap::new();
        let mut expected = start;
        for msg in rx {
            let (task, row, secs) = match msg {
                Ok(m) => m,
                Err(e) => {
                    next.store(end, Ordering::SeqCst);
                    return Err(e);
                }
            };
            pending.insert(task, (row, secs));
            while let Some((row, secs)) = pending.remove(&expected) {
                if row.error.is_some() {
                    new_errors += 1;
                }
                let line = serde_json::to_string(&row).expect("rows serialize");
                writeln!(out, "{line}")
                    .and_then(|_| out.flush())
                    .map_err(|e| Error::io("appending result row", e))?;
                let _ = writeln!(
                    timings,
                    "{}\t{}\t{secs:.6}\t{}",
                    row.article_id,
                    row.cell,
                    row.tokens.unwrap_or(0)
                );
                expected += 1;
            }
        }
        Ok(expected)
    });
    let rows_in_file = written?;
    let error_rows = prior_errors + new_errors;
    let complete = rows_in_file == total;
    let failed = complete && error_rows as f64 > MAX_ERROR_SHARE * total as f64;
    let status = if failed {
        "failed"
    } else if complete {
        "complete"
    } else {
        "partial"
    };
    write_manifest(dir, &manifest(status, rows_in_file, error_rows))?;
    if failed {
        return Err(Error::RunFailed {
            failed: error_rows,
            total,
        });
    }
    Ok(RunSummary {
        results_path,
        total_rows: total,
        rows_in_file,
        error_rows,
        complete,
    })
}
