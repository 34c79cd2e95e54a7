//! Causal language model abstraction with residual-stream hooks.
//!
//! Layer `l` refers to the residual stream at the *output* of block `l`
//! (equivalently, the input of block `l + 1`). Captures and steering
//! additions both happen at that point; a capture taken at the same layer
//! as an intervention observes the stream after the addition.

mod bigram;
mod subprocess;
mod tiny;
mod tokenizer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub use bigram::BigramModel;
pub use subprocess::{serve_model, SubprocessModel};
pub use tiny::{Matrix, TinyBlock, TinyModel, TinyWeights, TINY_MODEL_ID, TINY_SEED};
pub use tokenizer::{CharTokenizer, REFERENCE_ALPHABET};

pub type TokenId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub model_id: String,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub default_steering_layer: usize,
    pub max_context: usize,
}

impl ModelDescriptor {
    pub fn new(
        model_id: impl Into<String>,
        num_layers: usize,
        hidden_dim: usize,
        vocab_size: usize,
        default_steering_layer: usize,
        max_context: usize,
    ) -> Result<Self> {
        let d = Self {
            model_id: model_id.into(),
            num_layers,
            hidden_dim,
            vocab_size,
            default_steering_layer,
            max_context,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_dim == 0 || self.vocab_size == 0 {
            return Err(Error::Invalid(format!(
                "model {}: layers, hidden size and vocabulary must be positive",
                self.model_id
            )));
        }
        self.check_layer(self.default_steering_layer)
    }

    pub fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.num_layers {
            return Err(Error::LayerOutOfRange {
                layer,
                num_layers: self.num_layers,
            });
        }
        Ok(())
    }

    /// Conventional steering layer for the Llama 3 family by size tag.
    pub fn conventional_layer(model_id: &str) -> Option<usize> {
        let id = model_id.to_ascii_lowercase();
        if id.contains("8b") {
            Some(24)
        } else if id.contains("3b") {
            Some(16)
        } else if id.contains("1b") {
            Some(8)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum DecodeMode {
    Greedy,
    SeededSampling { temperature: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub max_new_tokens: usize,
    pub decode: DecodeMode,
    pub stop_at_eos: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_new_tokens: 150,
            decode: DecodeMode::Greedy,
            stop_at_eos: true,
        }
    }
}

impl GenerationConfig {
    pub fn greedy(max_new_tokens: usize) -> Self {
        Self {
            max_new_tokens,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_new_tokens == 0 {
            return Err(Error::Invalid("max_new_tokens must be at least 1".into()));
        }
        if let DecodeMode::SeededSampling { temperature, .. } = self.decode {
            if !(temperature.is_finite() && temperature > 0.0) {
                return Err(Error::Invalid(format!(
                    "sampling temperature must be positive, got {temperature}"
                )));
            }
        }
        Ok(())
    }
}

/// Residual stream values at one layer: one row per input position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualActivation {
    pub layer: usize,
    pub rows: Vec<Vec<f64>>,
}

impl ResidualActivation {
    pub fn positions(&self) -> usize {
        self.rows.len()
    }

    pub fn last_row(&self) -> Option<&[f64]> {
        self.rows.last().map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositionPolicy {
    AllPositions,
    /// From the last prompt position onward, so the first generated token is
    /// already predicted from a steered state.
    #[default]
    GeneratedOnly,
}

impl PositionPolicy {
    pub fn covers(self, position: usize, prompt_len: usize) -> bool {
        match self {
            PositionPolicy::AllPositions => true,
            PositionPolicy::GeneratedOnly => position + 1 >= prompt_len,
        }
    }
}

impl fmt::Display for PositionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PositionPolicy::AllPositions => "all",
            PositionPolicy::GeneratedOnly => "generated",
        })
    }
}

impl FromStr for PositionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "all-positions" => Ok(PositionPolicy::AllPositions),
            "generated" | "generated-only" => Ok(PositionPolicy::GeneratedOnly),
            other => Err(Error::Invalid(format!("unknown position policy `{other}`"))),
        }
    }
}

/// An additive edit `a -> a + delta` of the residual stream at one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionHandle {
    pub layer: usize,
    pub additive: Vec<f64>,
    pub policy: PositionPolicy,
}

impl InterventionHandle {
    pub fn add(layer: usize, additive: Vec<f64>, policy: PositionPolicy) -> Self {
        Self {
            layer,
            additive,
            policy,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.additive.iter().all(|v| *v == 0.0)
    }
}

/// Checks layer range, width and the one-intervention-per-layer rule.
pub fn validate_interventions(
    descriptor: &ModelDescriptor,
    interventions: &[InterventionHandle],
) -> Result<()> {
    let mut seen = vec![false; descriptor.num_layers];
    for h in interventions {
        descriptor.check_layer(h.layer)?;
        if h.additive.len() != descriptor.hidden_dim {
            return Err(Error::Compatibility(format!(
                "intervention width {} does not match hidden size {} of {}",
                h.additive.len(),
                descriptor.hidden_dim,
                descriptor.model_id
            )));
        }
        if h.additive.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("intervention has non-finite entries".into()));
        }
        if std::mem::replace(&mut seen[h.layer], true) {
            return Err(Error::Invalid(format!(
                "more than one intervention registered at layer {}",
                h.layer
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Next-token logits, one row per input position.
    pub logits: Vec<Vec<f64>>,
    pub capture: Option<ResidualActivation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub tokens: Vec<TokenId>,
    pub text: String,
    /// Log-probability of each generated token under the (steered) model.
    pub logprobs: Vec<f64>,
    pub stopped_at_eos: bool,
}

/// A causal language model with residual-stream read/write hooks.
///
/// Implementors provide tokenization and a full-sequence [`forward`]; the
/// remaining operations have default implementations on top of it.
/// Adapters for real models usually override [`generate`] to use a KV cache.
///
/// [`forward`]: LanguageModel::forward
/// [`generate`]: LanguageModel::generate
pub trait LanguageModel: Send + Sync {
    fn descriptor(&self) -> &ModelDescriptor;

    fn tokenize(&self, text: &str) -> Vec<TokenId>;

    fn detokenize(&self, tokens: &[TokenId]) -> String;

    fn eos_token(&self) -> Option<TokenId> {
        None
    }

    /// Runs the model over `tokens`. Interventions apply at positions their
    /// policy covers, where the first `prompt_len` tokens count as prompt.
    fn forward(
        &self,
        tokens: &[TokenId],
        interventions: &[InterventionHandle],
        prompt_len: usize,
        capture_layer: Option<usize>,
    ) -> Result<ForwardOutput>;

    fn capture_activation(&self, tokens: &[TokenId], layer: usize) -> Result<ResidualActivation> {
        self.descriptor().check_layer(layer)?;
        if tokens.is_empty() {
            return Err(Error::EmptyInput("cannot capture activations of no tokens".into()));
        }
        let out = self.forward(tokens, &[], tokens.len(), Some(layer))?;
        out.capture
            .ok_or_else(|| Error::Invalid("model returned no capture".into()))
    }

    /// Log-probability of each token given its prefix; one entry per
    /// predicted position (the first token is not predicted).
    fn sequence_logprob(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        if tokens.len() < 2 {
            return Err(Error::InsufficientLength {
                got: tokens.len(),
                need: 2,
            });
        }
        let out = self.forward(tokens, &[], tokens.len(), None)?;
        Ok(tokens[1..]
            .iter()
            .zip(&out.logits)
            .map(|(&next, logits)| log_softmax(logits)[next as usize])
            .collect())
    }

    fn generate(
        &self,
        prompt: &[TokenId],
        config: &GenerationConfig,
        interventions: &[InterventionHandle],
    ) -> Result<Generation> {
        check_generation(self.descriptor(), prompt, config, interventions)?;
        let mut picker = TokenPicker::new(config);
        let mut seq = prompt.to_vec();
        let mut generated = Vec::new();
        let mut logprobs = Vec::new();
        let mut stopped_at_eos = false;
        for _ in 0..config.max_new_tokens {
            let out = self.forward(&seq, interventions, prompt.len(), None)?;
            let logits = out
                .logits
                .last()
                .ok_or_else(|| Error::Invalid("model returned no logits".into()))?;
            let (next, lp) = picker.pick(logits);
            if config.stop_at_eos && Some(next) == self.eos_token() {
                stopped_at_eos = true;
                break;
            }
            seq.push(next);
            generated.push(next);
            logprobs.push(lp);
        }
        Ok(Generation {
            text: self.detokenize(&generated),
            tokens: generated,
            logprobs,
            stopped_at_eos,
        })
    }
}

/// Shared precondition checks for `generate` implementations.
pub fn check_generation(
    descriptor: &ModelDescriptor,
    prompt: &[TokenId],
    config: &GenerationConfig,
    interventions: &[InterventionHandle],
) -> Result<()> {
    config.validate()?;
    validate_interventions(descriptor, interventions)?;
    if prompt.is_empty() {
        return Err(Error::EmptyInput("generation prompt is empty".into()));
    }
    let needed = prompt.len() + config.max_new_tokens;
    if needed > descriptor.max_context {
        return Err(Error::ContextOverflow {
            needed,
            limit: descriptor.max_context,
        });
    }
    Ok(())
}

/// Chooses next tokens according to a [`DecodeMode`].
pub struct TokenPicker {
    mode: DecodeMode,
    rng: Option<SeededRng>,
}

impl TokenPicker {
    pub fn new(config: &GenerationConfig) -> Self {
        let rng = match config.decode {
            DecodeMode::Greedy => None,
            DecodeMode::SeededSampling { seed, .. } => Some(SeededRng::new(seed)),
        };
        Self {
            mode: config.decode,
            rng,
        }
    }

    /// Returns the chosen token and its untempered log-probability.
    pub fn pick(&mut self, logits: &[f64]) -> (TokenId, f64) {
        let logp = log_softmax(logits);
        let chosen = match (self.mode, self.rng.as_mut()) {
            (DecodeMode::SeededSampling { temperature, .. }, Some(rng)) => {
                let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
                let probs: Vec<f64> = log_softmax(&scaled).into_iter().map(f64::exp).collect();
                rng.weighted_index(&probs)
            }
            _ => argmax(logits),
        };
        (chosen as TokenId, logp[chosen])
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + sum.ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Session-local intervention registry over a shared model.
pub struct Session<'m> {
    model: &'m dyn LanguageModel,
    interventions: Vec<InterventionHandle>,
}

impl<'m> Session<'m> {
    pub fn new(model: &'m dyn LanguageModel) -> Self {
        Self {
            model,
            interventions: Vec::new(),
        }
    }

    pub fn register(&mut self, handle: InterventionHandle) -> Result<()> {
        let mut next = self.interventions.clone();
        next.push(handle);
        validate_interventions(self.model.descriptor(), &next)?;
        self.interventions = next;
        Ok(())
    }

    pub fn remove(&mut self, layer: usize) -> Option<InterventionHandle> {
        let pos = self.interventions.iter().position(|h| h.layer == layer)?;
        Some(self.interventions.remove(pos))
    }

    pub fn interventions(&self) -> &[InterventionHandle] {
        &self.interventions
    }

    pub fn generate(&self, prompt: &[TokenId], config: &GenerationConfig) -> Result<Generation> {
        self.model.generate(prompt, config, &self.interventions)
    }

    /// Capture at `layer` with every registered intervention active and the
    /// whole token sequence treated as prompt.
    pub fn capture(&self, tokens: &[TokenId], layer: usize) -> Result<ResidualActivation> {
        self.model.descriptor().check_layer(layer)?;
        if tokens.is_empty() {
            return Err(Error::EmptyInput("cannot capture activations of no tokens".into()));
        }
        validate_interventions(self.model.descriptor(), &self.interventions)?;
        self.model
            .forward(tokens, &self.interventions, tokens.len(), Some(layer))?
            .capture
            .ok_or_else(|| Error::Invalid("model returned no capture".into()))
    }

    pub fn logits(&self, tokens: &[TokenId]) -> Result<Vec<Vec<f64>>> {
        validate_interventions(self.model.descriptor(), &self.interventions)?;
        Ok(self
            .model
            .forward(tokens, &self.interventions, tokens.len(), None)?
            .logits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_softmax_normalizes() {
        let lp = log_softmax(&[1.0, 2.0, 3.0, -1.0]);
        let total: f64 = lp.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(lp.iter().all(|v| *v <= 0.0));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn conventional_layers() {
        assert_eq!(ModelDescriptor::conventional_layer("meta-llama/Llama-3.2-1B-Instruct"), Some(8));
        assert_eq!(ModelDescriptor::conventional_layer("Llama-3.2-3B"), Some(16));
        assert_eq!(ModelDescriptor::conventional_layer("Llama-3.1-8B"), Some(24));
        assert_eq!(ModelDescriptor::conventional_layer("gpt2"), None);
    }

    #[test]
    fn descriptor_rejects_bad_default_layer() {
        assert!(ModelDescriptor::new("m", 2, 4, 8, 2, 16).is_err());
        assert!(ModelDescriptor::new("m", 2, 4, 8, 1, 16).is_ok());
    }

    #[test]
    fn generation_config_defaults_to_150_greedy() {
        let c = GenerationConfig::default();
        assert_eq!(c.max_new_tokens, 150);
        assert_eq!(c.decode, DecodeMode::Greedy);
        assert!(GenerationConfig::greedy(0).validate().is_err());
    }

    #[test]
    fn generated_only_covers_last_prompt_position() {
        let p = PositionPolicy::GeneratedOnly;
        assert!(!p.covers(2, 4));
        assert!(p.covers(3, 4));
        assert!(p.covers(7, 4));
        assert!(PositionPolicy::AllPositions.covers(0, 4));
    }
}
