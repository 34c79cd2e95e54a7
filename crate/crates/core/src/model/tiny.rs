//! Deterministic reference transformer used by tests and the offline pipeline.
//!
//! Pre-norm blocks with single-head causal attention and a GELU MLP, no
//! positional embedding (order comes from the causal mask alone), f64
//! arithmetic throughout. Weights are drawn from a fixed seed and shipped as
//! a `tiny-lm/1` text dump.

use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, Normal};

use super::{
    check_generation, validate_interventions, CharTokenizer, ForwardOutput, Generation,
    GenerationConfig, InterventionHandle, LanguageModel, ModelDescriptor, ResidualActivation,
    TokenId, TokenPicker,
};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const TINY_MODEL_ID: &str = "tiny-char-2l";
pub const TINY_SEED: u64 = 20_250_601;
const FORMAT: &str = "tiny-lm/1";
const LN_EPS: f64 = 1e-5;
const TINY_CONTEXT: usize = 8192;

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `x · M` for a row vector `x` of length `rows`.
    pub fn left_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, xv) in x.iter().enumerate() {
            if *xv == 0.0 {
                continue;
            }
            for (o, m) in out.iter_mut().zip(self.row(r)) {
                *o += xv * m;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyBlock {
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    pub w_in: Matrix,
    pub b_in: Vec<f64>,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyWeights {
    pub embed: Matrix,
    pub blocks: Vec<TinyBlock>,
    pub lnf_gain: Vec<f64>,
    pub lnf_bias: Vec<f64>,
    pub unembed: Matrix,
}

impl TinyWeights {
    pub fn zeros(vocab: usize, hidden: usize, mlp: usize, layers: usize) -> Self {
        let block = TinyBlock {
            ln1_gain: vec![0.0; hidden],
            ln1_bias: vec![0.0; hidden],
            wq: Matrix::zeros(hidden, hidden),
            wk: Matrix::zeros(hidden, hidden),
            wv: Matrix::zeros(hidden, hidden),
            wo: Matrix::zeros(hidden, hidden),
            ln2_gain: vec![0.0; hidden],
            ln2_bias: vec![0.0; hidden],
            w_in: Matrix::zeros(hidden, mlp),
            b_in: vec![0.0; mlp],
            w_out: Matrix::zeros(mlp, hidden),
            b_out: vec![0.0; hidden],
        };
        Self {
            embed: Matrix::zeros(vocab, hidden),
            blocks: vec![block; layers],
            lnf_gain: vec![0.0; hidden],
            lnf_bias: vec![0.0; hidden],
            unembed: Matrix::zeros(hidden, vocab),
        }
    }

    fn tensors(&self) -> Vec<(String, usize, usize, &[f64])> {
        fn vec_t(name: String, v: &[f64]) -> (String, usize, usize, &[f64]) {
            (name, 1, v.len(), v)
        }
        fn mat_t(name: String, m: &Matrix) -> (String, usize, usize, &[f64]) {
            (name, m.rows, m.cols, m.data.as_slice())
        }
        let mut out = vec![mat_t("embed".into(), &self.embed)];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push(vec_t(format!("block{i}.ln1.gain"), &b.ln1_gain));
            out.push(vec_t(format!("block{i}.ln1.bias"), &b.ln1_bias));
            out.push(mat_t(format!("block{i}.attn.q"), &b.wq));
            out.push(mat_t(format!("block{i}.attn.k"), &b.wk));
            out.push(mat_t(format!("block{i}.attn.v"), &b.wv));
            out.push(mat_t(format!("block{i}.attn.o"), &b.wo));
            out.push(vec_t(format!("block{i}.ln2.gain"), &b.ln2_gain));
            out.push(vec_t(format!("block{i}.ln2.bias"), &b.ln2_bias));
            out.push(mat_t(format!("block{i}.mlp.in"), &b.w_in));
            out.push(vec_t(format!("block{i}.mlp.in_bias"), &b.b_in));
            out.push(mat_t(format!("block{i}.mlp.out"), &b.w_out));
            out.push(vec_t(format!("block{i}.mlp.out_bias"), &b.b_out));
        }
        out.push(vec_t("final.ln.gain".into(), &self.lnf_gain));
        out.push(vec_t("final.ln.bias".into(), &self.lnf_bias));
        out.push(mat_t("unembed".into(), &self.unembed));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out: Vec<(String, &mut Vec<f64>)> = vec![("embed".into(), &mut self.embed.data)];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("block{i}.ln1.gain"), &mut b.ln1_gain));
            out.push((format!("block{i}.ln1.bias"), &mut b.ln1_bias));
            out.push((format!("block{i}.attn.q"), &mut b.wq.data));
            out.push((format!("block{i}.attn.k"), &mut b.wk.data));
            out.push((format!("block{i}.attn.v"), &mut b.wv.data));
            out.push((format!("block{i}.attn.o"), &mut b.wo.data));
            out.push((format!("block{i}.ln2.gain"), &mut b.ln2_gain));
            out.push((format!("block{i}.ln2.bias"), &mut b.ln2_bias));
            out.push((format!("block{i}.mlp.in"), &mut b.w_in.data));
            out.push((format!("block{i}.mlp.in_bias"), &mut b.b_in));
            out.push((format!("block{i}.mlp.out"), &mut b.w_out.data));
            out.push((format!("block{i}.mlp.out_bias"), &mut b.b_out));
        }
        out.push(("final.ln.gain".into(), &mut self.lnf_gain));
        out.push(("final.ln.bias".into(), &mut self.lnf_bias));
        out.push(("unembed".into(), &mut self.unembed.data));
        out
    }
}

pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    x.iter()
        .zip(gain.iter().zip(bias))
        .map(|(v, (g, b))| (v - mean) * inv * g + b)
        .collect()
}

pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyModel {
    descriptor: ModelDescriptor,
    tokenizer: CharTokenizer,
    weights: TinyWeights,
    seed: u64,
}

#[derive(Default)]
struct KvCache {
    keys: Vec<Vec<Vec<f64>>>,
    values: Vec<Vec<Vec<f64>>>,
}

impl TinyModel {
    pub fn new(
        model_id: impl Into<String>,
        tokenizer: CharTokenizer,
        weights: TinyWeights,
        seed: u64,
    ) -> Result<Self> {
        let vocab = tokenizer.vocab_size();
        let hidden = weights.embed.cols;
        if weights.embed.rows != vocab || weights.unembed.cols != vocab {
            return Err(Error::Invalid(format!(
                "tiny model weights cover {} symbols, tokenizer has {vocab}",
                weights.embed.rows
            )));
        }
        if weights.blocks.is_empty() {
            return Err(Error::Invalid("tiny model needs at least one block".into()));
        }
        let layers = weights.blocks.len();
        let descriptor =
            ModelDescriptor::new(model_id, layers, hidden, vocab, layers - 1, TINY_CONTEXT)?;
        Ok(Self {
            descriptor,
            tokenizer,
            weights,
            seed,
        })
    }

    /// The reference model: 2 layers, width 16, 64-symbol character vocabulary.
    pub fn reference() -> Self {
        Self::from_seed(TINY_SEED, CharTokenizer::reference(), 16, 64, 2)
    }

    pub fn from_seed(
        seed: u64,
        tokenizer: CharTokenizer,
        hidden: usize,
        mlp: usize,
        layers: usize,
    ) -> Self {
        let vocab = tokenizer.vocab_size();
        let mut weights = TinyWeights::zeros(vocab, hidden, mlp, layers);
        let mut rng = SeededRng::new(seed);
        let proj = 1.0 / (hidden as f64).sqrt();
        for (name, data) in weights.tensors_mut() {
            let (mean, std) = if name.ends_with(".gain") {
                (1.0, 0.1)
            } else if name.ends_with("bias") {
                (0.0, 0.02)
            } else if name == "embed" {
                (0.0, 1.0)
            } else if name.ends_with("mlp.out") {
                (0.0, 1.0 / (mlp as f64).sqrt())
            } else {
                (0.0, proj)
            };
            let normal = Normal::new(mean, std).expect("valid normal");
            for v in data.iter_mut() {
                *v = normal.sample(rng.inner_mut());
            }
        }
        Self::new(TINY_MODEL_ID, tokenizer, weights, seed).expect("consistent reference weights")
    }

    pub fn weights(&self) -> &TinyWeights {
        &self.weights
    }

    pub fn tokenizer(&self) -> &CharTokenizer {
        &self.tokenizer
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Pushes one position through every block, applying interventions and
    /// recording the residual at `capture_layer`. Returns next-token logits.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        token: TokenId,
        position: usize,
        cache: &mut KvCache,
        interventions: &[InterventionHandle],
        prompt_len: usize,
        capture_layer: Option<usize>,
        captured: &mut Vec<Vec<f64>>,
    ) -> Vec<f64> {
        let w = &self.weights;
        let d = w.embed.cols;
        let scale = 1.0 / (d as f64).sqrt();
        let mut x = w.embed.row(token as usize).to_vec();
        if cache.keys.is_empty() {
            cache.keys = vec![Vec::new(); w.blocks.len()];
            cache.values = vec![Vec::new(); w.blocks.len()];
        }
        for (layer, block) in w.blocks.iter().enumerate() {
            let a = layer_norm(&x, &block.ln1_gain, &block.ln1_bias);
            let q = block.wq.left_mul(&a);
            cache.keys[layer].push(block.wk.left_mul(&a));
            cache.values[layer].push(block.wv.left_mul(&a));
            let scores: Vec<f64> = cache.keys[layer]
                .iter()
                .map(|k| q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale)
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let mut attended = vec![0.0; d];
            for (e, v) in exps.iter().zip(&cache.values[layer]) {
                let p = e / z;
                for (o, vv) in attended.iter_mut().zip(v) {
                    *o += p * vv;
                }
            }
            for (xv, o) in x.iter_mut().zip(block.wo.left_mul(&attended)) {
                *xv += o;
            }
            let m = layer_norm(&x, &block.ln2_gain, &block.ln2_bias);
            let mut hidden = block.w_in.left_mul(&m);
            for (h, b) in hidden.iter_mut().zip(&block.b_in) {
                *h = gelu(*h + b);
            }
            for ((xv, o), b) in x.iter_mut().zip(block.w_out.left_mul(&hidden)).zip(&block.b_out) {
                *xv += o + b;
            }
            for h in interventions {
                if h.layer == layer && h.policy.covers(position, prompt_len) {
                    for (xv, add) in x.iter_mut().zip(&h.additive) {
                        *xv += add;
                    }
                }
            }
            if capture_layer == Some(layer) {
                captured.push(x.clone());
            }
        }
        let f = layer_norm(&x, &w.lnf_gain, &w.lnf_bias);
        w.unembed.left_mul(&f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_fixture_string())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_fixture_str(&text, path)
    }

    pub fn to_fixture_string(&self) -> String {
        let mut out = String::new();
        let w = &self.weights;
        let _ = writeln!(out, "{FORMAT}");
        let _ = writeln!(out, "model_id={}", self.descriptor.model_id);
        let _ = writeln!(out, "vocab={}", self.tokenizer.vocab_size());
        let _ = writeln!(out, "hidden={}", w.embed.cols);
        let _ = writeln!(out, "layers={}", w.blocks.len());
        let _ = writeln!(out, "mlp={}", w.blocks[0].b_in.len());
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "eos={}", self.tokenizer.eos().is_some());
        let _ = writeln!(out, "alphabet={}", escape(&self.tokenizer.alphabet()));
        for (name, rows, cols, data) in w.tensors() {
            let _ = writeln!(out, "tensor {name} {rows} {cols}");
            for r in 0..rows {
                let row: Vec<String> = data[r * cols..(r + 1) * cols]
                    .iter()
                    .map(|v| format!("{v:?}"))
                    .collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_fixture_str(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, FORMAT)) => {}
            Some((_, other)) => {
                return Err(Error::corrupt(path, format!("unsupported format `{other}`")))
            }
            None => return Err(Error::corrupt(path, "empty file")),
        }
        let mut header = std::collections::HashMap::new();
        let mut pending = None;
        for (n, line) in lines.by_ref() {
            if line.starts_with("tensor ") {
                pending = Some((n, line));
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, n, "expected key=value"))?;
            header.insert(k.to_string(), v.to_string());
        }
        let field = |k: &str| {
            header
                .get(k)
                .cloned()
                .ok_or_else(|| Error::corrupt(path, format!("missing header field `{k}`")))
        };
        let num = |k: &str| -> Result<usize> {
            field(k)?
                .parse()
                .map_err(|_| Error::corrupt(path, format!("bad header field `{k}`")))
        };
        let vocab = num("vocab")?;
        let hidden = num("hidden")?;
        let layers = num("layers")?;
        let mlp = num("mlp")?;
        let seed: u64 = field("seed")?
            .parse()
            .map_err(|_| Error::corrupt(path, "bad seed"))?;
        let with_eos = field("eos")? == "true";
        let alphabet = unescape(&field("alphabet")?);
        let tokenizer = CharTokenizer::from_alphabet(&alphabet, with_eos);
        if tokenizer.vocab_size() != vocab {
            return Err(Error::corrupt(path, "alphabet does not match vocab size"));
        }
        let mut weights = TinyWeights::zeros(vocab, hidden, mlp, layers);
        let expected: Vec<(String, usize)> = weights
            .tensors()
            .into_iter()
            .map(|(name, r, c, _)| (name, r * c))
            .collect();
        let mut slots = weights.tensors_mut();
        let mut slot_idx = 0;
        let mut saw_end = false;
        let mut current = pending;
        while let Some((n, line)) = current.take() {
            if line == "end" {
                saw_end = true;
                break;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "tensor" {
                return Err(Error::parse(path, n, "expected `tensor <name> <rows> <cols>`"));
            }
            let (name, len) = expected
                .get(slot_idx)
                .ok_or_else(|| Error::parse(path, n, "unexpected extra tensor"))?;
            if parts[1] != name {
                return Err(Error::parse(path, n, format!("expected tensor `{name}`")));
            }
            let rows: usize = parts[2].parse().map_err(|_| Error::parse(path, n, "bad rows"))?;
            let cols: usize = parts[3].parse().map_err(|_| Error::parse(path, n, "bad cols"))?;
            if rows * cols != *len {
                return Err(Error::parse(path, n, format!("tensor `{name}` has wrong shape")));
            }
            let mut values = Vec::with_capacity(*len);
            for _ in 0..rows {
                let (rn, row) = lines
                    .next()
                    .ok_or_else(|| Error::corrupt(path, "truncated tensor data"))?;
                for tok in row.split_whitespace() {
                    let v: f64 = tok
                        .parse()
                        .map_err(|_| Error::parse(path, rn, format!("bad number `{tok}`")))?;
                    values.push(v);
                }
            }
            if values.len() != *len {
                return Err(Error::corrupt(path, format!("tensor `{name}` has wrong length")));
            }
            *slots[slot_idx].1 = values;
            slot_idx += 1;
            current = lines.next();
        }
        drop(slots);
        if !saw_end || slot_idx != expected.len() {
            return Err(Error::corrupt(path, "truncated file"));
        }
        Self::new(field("model_id")?, tokenizer, weights, seed)
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\n', "\\n")
}

fn unescape(s: &str) -> String {
    let mut out = String::new();
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

impl LanguageModel for TinyModel {
    fn descriptor(&self) -> &ModelDescriptor {
        &self.descriptor
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        self.tokenizer.encode(text)
    }

    fn detokenize(&self, tokens: &[TokenId]) -> String {
        self.tokenizer.decode(tokens)
    }

    fn eos_token(&self) -> Option<TokenId> {
        self.tokenizer.eos()
    }

    fn forward(
        &self,
        tokens: &[TokenId],
        interventions: &[InterventionHandle],
        prompt_len: usize,
        capture_layer: Option<usize>,
    ) -> Result<ForwardOutput> {
        validate_interventions(&self.descriptor, interventions)?;
        if let Some(l) = capture_layer {
            self.descriptor.check_layer(l)?;
        }
        if tokens.len() > self.descriptor.max_context {
            return Err(Error::ContextOverflow {
                needed: tokens.len(),
                limit: self.descriptor.max_context,
            });
        }
        if let Some(bad) = tokens.iter().find(|t| **t as usize >= self.descriptor.vocab_size) {
            return Err(Error::Invalid(format!("token id {bad} outside vocabulary")));
        }
        let mut cache = KvCache::default();
        let mut captured = Vec::new();
        let logits = tokens
            .iter()
            .enumerate()
            .map(|(p, &t)| {
                self.step(t, p, &mut cache, interventions, prompt_len, capture_layer, &mut captured)
            })
            .collect();
        Ok(ForwardOutput {
            logits,
            capture: capture_layer.map(|layer| ResidualActivation {
                layer,
                rows: captured,
            }),
        })
    }

    fn generate(
        &self,
        prompt: &[TokenId],
        config: &GenerationConfig,
        interventions: &[InterventionHandle],
    ) -> Result<Generation> {
        check_generation(&self.descriptor, prompt, config, interventions)?;
        let mut cache = KvCache::default();
        let mut scratch = Vec::new();
        let mut logits = Vec::new();
        for (p, &t) in prompt.iter().enumerate() {
            logits = self.step(t, p, &mut cache, interventions, prompt.len(), None, &mut scratch);
        }
        let mut picker = TokenPicker::new(config);
        let mut generated = Vec::new();
        let mut logprobs = Vec::new();
        let mut stopped_at_eos = false;
        for i in 0..config.max_new_tokens {
            let (next, lp) = picker.pick(&logits);
            if config.stop_at_eos && Some(next) == self.tokenizer.eos() {
                stopped_at_eos = true;
                break;
            }
            generated.push(next);
            logprobs.push(lp);
            if i + 1 < config.max_new_tokens {
                let pos = prompt.len() + i;
                logits =
                    self.step(next, pos, &mut cache, interventions, prompt.len(), None, &mut scratch);
            }
        }
        Ok(Generation {
            text: self.tokenizer.decode(&generated),
            tokens: generated,
            logprobs,
            stopped_at_eos,
        })
    }
}
