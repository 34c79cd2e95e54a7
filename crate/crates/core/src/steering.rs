//! Mean-difference steering vectors and the `caa-vec/1` file format.
//!
//! ```text
//! caa-vec/1
//! behavior=sentiment
//! model_id=tiny-char-2l
//! layer=1
//! d=16
//! num_pairs=20
//! l2_norm=3.25
//! created_at=1760000000        (optional, unix seconds)
//! checksum=sha256:<hex>
//! values
//! <one value per line, shortest round-trip decimal>
//! end
//! ```
//!
//! The checksum is SHA-256 over the file bytes with the checksum line
//! removed.

use std::fs;
use std::path::Path;
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::behavior::Behavior;
use crate::corpus::{ContrastPair, PairDataset};
use crate::error::{Error, Result};
use crate::model::{InterventionHandle, LanguageModel, ModelDescriptor, PositionPolicy};

const VECTOR_FORMAT: &str = "caa-vec/1";
const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringVector {
    pub behavior: Behavior,
    pub model_id: String,
    pub layer: usize,
    pub values: Vec<f64>,
    pub num_pairs: usize,
    pub l2_norm: f64,
    pub created_at: Option<u64>,
}

pub fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl SteeringVector {
    pub fn new(behavior: Behavior, model_id: &str, layer: usize, values: Vec<f64>, num_pairs: usize) -> Result<Self> {
        let v = Self {
            behavior,
            model_id: model_id.to_string(),
            layer,
            l2_norm: l2_norm(&values),
            values,
            num_pairs,
            created_at: None,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_pairs == 0 {
            return Err(Error::Invalid("steering vector must come from at least one pair".into()));
        }
        if self.values.is_empty() {
            return Err(Error::Invalid("steering vector is empty".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("steering vector has non-finite entries".into()));
        }
        let norm = l2_norm(&self.values);
        if (norm - self.l2_norm).abs() > NORM_TOLERANCE {
            return Err(Error::Invalid(format!(
                "recorded l2_norm {} differs from recomputed {norm}",
                self.l2_norm
            )));
        }
        if self.model_id.is_empty() || self.model_id.contains(['\n', '\r']) {
            return Err(Error::Invalid("model_id must be a nonempty single line".into()));
        }
        Ok(())
    }

    pub fn check_compatible(&self, descriptor: &ModelDescriptor) -> Result<()> {
        if self.model_id != descriptor.model_id {
            return Err(Error::Compatibility(format!(
                "vector was extracted from `{}` but the model is `{}`",
                self.model_id, descriptor.model_id
            )));
        }
        if self.dim() != descriptor.hidden_dim {
            return Err(Error::Compatibility(format!(
                "vector has d={} but `{}` has hidden_dim={}",
                self.dim(),
                descriptor.model_id,
                descriptor.hidden_dim
            )));
        }
        if self.layer >= descriptor.num_layers {
            return Err(Error::Compatibility(format!(
                "vector layer {} outside the model's {} layers",
                self.layer, descriptor.num_layers
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringSpec {
    pub vector: SteeringVector,
    pub strength: f64,
    pub policy: PositionPolicy,
}

impl SteeringSpec {
    pub fn new(vector: SteeringVector, strength: f64) -> Self {
        Self {
            vector,
            strength,
            policy: PositionPolicy::default(),
        }
    }

    pub fn with_policy(mut self, policy: PositionPolicy) -> Self {
        self.policy = policy;
        self
    }
}

/// Handle adding `λ·s` at the vector's layer under the spec's policy.
pub fn make_intervention(spec: &SteeringSpec, descriptor: &ModelDescriptor) -> Result<InterventionHandle> {
    if !spec.strength.is_finite() {
        return Err(Error::Invalid(format!("steering strength {} is not finite", spec.strength)));
    }
    spec.vector.validate()?;
    spec.vector.check_compatible(descriptor)?;
    let additive = spec.vector.values.iter().map(|v| spec.strength * v).collect();
    Ok(InterventionHandle::add(spec.vector.layer, additive, spec.policy))
}

/// Residuals recorded for one pair at the last token of each text.
#[derive(Debug, Clone, PartialEq)]
pub struct PairActivations {
    pub pair_id: String,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

pub fn record_pair_activations(
    model: &dyn LanguageModel,
    pair: &ContrastPair,
    layer: usize,
) -> Result<PairActivations> {
    let last = |text: &str, side: &str| -> Result<Vec<f64>> {
        let tokens = model.tokenize(text);
        if tokens.is_empty() {
            return Err(Error::InvalidPair {
                pair_id: pair.pair_id.clone(),
                reason: format!("{side} text tokenizes to nothing"),
            });
        }
        let act = model.capture_activation(&tokens, layer)?;
        Ok(act.last_row().expect("nonempty capture").to_vec())
    };
    Ok(PairActivations {
        pair_id: pair.pair_id.clone(),
        positive: last(&pair.positive, "positive")?,
        negative: last(&pair.negative, "negative")?,
    })
}

/// `(1/|D|) Σ (a⁺ − a⁻)`, summed in ascending `pair_id` order.
pub fn mean_difference(records: &[PairActivations]) -> Result<Vec<f64>> {
    let first = records.first().ok_or(Error::EmptyDataset)?;
    let d = first.positive.len();
    let mut sorted: Vec<&PairActivations> = records.iter().collect();
    sorted.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    let mut sum = vec![0.0; d];
    for r in sorted {
        if r.positive.len() != d || r.negative.len() != d {
            return Err(Error::InvalidPair {
                pair_id: r.pair_id.clone(),
                reason: "activation width differs from the first pair".into(),
            });
        }
        for ((s, p), n) in sum.iter_mut().zip(&r.positive).zip(&r.negative) {
            *s += p - n;
        }
    }
    let n = records.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Records every pair and reduces them to a steering vector. `workers > 1`
/// records pairs on that many threads; the reduction is unchanged.
pub fn extract_steering_vector(
    model: &dyn LanguageModel,
    dataset: &PairDataset,
    layer: usize,
    workers: usize,
) -> Result<SteeringVector> {
    if dataset.pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    model.descriptor().check_layer(layer)?;
    let workers = workers.clamp(1, dataset.pairs.len());
    let results: Vec<Result<PairActivations>> = if workers == 1 {
        dataset
            .pairs
            .iter()
            .map(|p| record_pair_activations(model, p, layer))
            .collect()
    } else {
        let chunk = dataset.pairs.len().div_ceil(workers);
        thread::scope(|s| {
            let handles: Vec<_> = dataset
                .pairs
                .chunks(chunk)
                .map(|ps| {
                    s.spawn(move || {
                        ps.iter()
                            .map(|p| record_pair_activations(model, p, layer))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("recording thread panicked"))
                .collect()
        })
    };
    let mut records = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for (pair, r) in dataset.pairs.iter().zip(results) {
        match r {
            Ok(a) => records.push(a),
            Err(e) => {
                log::warn!("pair {} failed: {e}", pair.pair_id);
                failed.push(pair.pair_id.clone());
            }
        }
    }
    if !failed.is_empty() {
        return Err(Error::PairRecording(failed));
    }
    let values = mean_difference(&records)?;
    SteeringVector::new(
        dataset.behavior,
        &model.descriptor().model_id,
        layer,
        values,
        records.len(),
    )
}

fn checksum(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

pub fn vector_to_string(v: &SteeringVector) -> String {
    let mut header = format!(
        "{VECTOR_FORMAT}\nbehavior={}\nmodel_id={}\nlayer={}\nd={}\nnum_pairs={}\nl2_norm={:?}\n",
        v.behavior,
        v.model_id,
        v.layer,
        v.dim(),
        v.num_pairs,
        v.l2_norm
    );
    if let Some(t) = v.created_at {
        header.push_str(&format!("created_at={t}\n"));
    }
    let mut body = String::from("values\n");
    for x in &v.values {
        body.push_str(&format!("{x:?}\n"));
    }
    body.push_str("end\n");
    let sum = checksum(&format!("{header}{body}"));
    format!("{header}checksum=sha256:{sum}\n{body}")
}

pub fn save_vector(v: &SteeringVector, path: &Path) -> Result<()> {
    v.validate()?;
    fs::write(path, vector_to_string(v)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_vector(path: &Path) -> Result<SteeringVector> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_vector(&text, path)
}

pub fn parse_vector(text: &str, path: &Path) -> Result<SteeringVector> {
    let corrupt = |reason: String| Error::corrupt(path, reason);
    if !text.ends_with("end\n") {
        return Err(corrupt("missing `end` terminator (truncated file?)".into()));
    }
    let lines: Vec<&str> = text[..text.len() - 1].split('\n').collect();
    if lines.first() != Some(&VECTOR_FORMAT) {
        return Err(corrupt(format!(
            "unsupported version `{}`, expected `{VECTOR_FORMAT}`",
            lines.first().unwrap_or(&"")
        )));
    }
    let ck_idx = lines
        .iter()
        .position(|l| l.starts_with("checksum="))
        .ok_or_else(|| corrupt("missing checksum".into()))?;
    let declared = lines[ck_idx]
        .strip_prefix("checksum=sha256:")
        .ok_or_else(|| corrupt("checksum must be sha256".into()))?;
    let mut rest: Vec<&str> = lines.clone();
    rest.remove(ck_idx);
    let body = format!("{}\n", rest.join("\n"));
    if checksum(&body) != declared {
        return Err(corrupt("checksum mismatch".into()));
    }

    let values_idx = lines
        .iter()
        .position(|l| *l == "values")
        .ok_or_else(|| corrupt("missing `values` section".into()))?;
    let mut behavior = None;
    let mut model_id = None;
    let mut layer = None;
    let mut d = None;
    let mut num_pairs = None;
    let mut norm = None;
    let mut created_at = None;
    for line in &lines[1..values_idx] {
        if line.starts_with("checksum=") {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| corrupt(format!("bad header line `{line}`")))?;
        let bad = |_| corrupt(format!("bad value for `{k}`"));
        match k {
            "behavior" => behavior = Some(v.parse::<Behavior>().map_err(|e| corrupt(e.to_string()))?),
            "model_id" => model_id = Some(v.to_string()),
            "layer" => layer = Some(v.parse::<usize>().map_err(bad)?),
            "d" => d = Some(v.parse::<usize>().map_err(bad)?),
            "num_pairs" => num_pairs = Some(v.parse::<usize>().map_err(bad)?),
            "l2_norm" => norm = Some(v.parse::<f64>().map_err(|_| corrupt("bad value for `l2_norm`".into()))?),
            "created_at" => created_at = Some(v.parse::<u64>().map_err(bad)?),
            other => return Err(corrupt(format!("unknown header key `{other}`"))),
        }
    }
    let missing = |k: &str| corrupt(format!("missing header `{k}`"));
    let d = d.ok_or_else(|| missing("d"))?;
    let value_lines = &lines[values_idx + 1..lines.len() - 1];
    if value_lines.len() != d {
        return Err(corrupt(format!("declared d={d} but found {} values", value_lines.len())));
    }
    let values = value_lines
        .iter()
        .map(|l| l.parse::<f64>().map_err(|_| corrupt(format!("bad value `{l}`"))))
        .collect::<Result<Vec<_>>>()?;
    let v = SteeringVector {
        behavior: behavior.ok_or_else(|| missing("behavior"))?,
        model_id: model_id.ok_or_else(|| missing("model_id"))?,
        layer: layer.ok_or_else(|| missing("layer"))?,
        values,
        num_pairs: num_pairs.ok_or_else(|| missing("num_pairs"))?,
        l2_norm: norm.ok_or_else(|| missing("l2_norm"))?,
        created_at,
    };
    v.validate().map_err(|e| corrupt(e.to_string()))?;
    Ok(v)
}
