use super::{
    validate_interventions, CharTokenizer, ForwardOutput, InterventionHandle, LanguageModel,
    ModelDescriptor, ResidualActivation, TokenId,
};
use crate::error::{Error, Result};

/// Single-layer model whose residual stream is the one-hot vector of the
/// current token and whose logits are `h · T` for a fixed `V × V` table.
///
/// With hand-set tables it gives exact logits for scoring tests; with a zero
/// table it is the uniform model.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramModel {
    descriptor: ModelDescriptor,
    tokenizer: CharTokenizer,
    table: Vec<Vec<f64>>,
}

impl BigramModel {
    pub fn new(model_id: &str, tokenizer: CharTokenizer, table: Vec<Vec<f64>>) -> Result<Self> {
        let v = tokenizer.vocab_size();
        if table.len() != v || table.iter().any(|row| row.len() != v) {
            return Err(Error::Invalid(format!("bigram table must be {v}x{v}")));
        }
        let descriptor = ModelDescriptor::new(model_id, 1, v, v, 0, usize::MAX)?;
        Ok(Self {
            descriptor,
            tokenizer,
            table,
        })
    }

    /// Uniform next-token distribution over an alphabet without end-of-sequence.
    pub fn uniform(alphabet: &str) -> Self {
        let tokenizer = CharTokenizer::from_alphabet(alphabet, false);
        let v = tokenizer.vocab_size();
        Self::new("uniform", tokenizer, vec![vec![0.0; v]; v]).expect("square table")
    }

    pub fn tokenizer(&self) -> &CharTokenizer {
        &self.tokenizer
    }
}

impl LanguageModel for BigramModel {
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
        let v = self.descriptor.vocab_size;
        let mut rows = Vec::with_capacity(tokens.len());
        let mut logits = Vec::with_capacity(tokens.len());
        for (p, &t) in tokens.iter().enumerate() {
            let t = t as usize;
            if t >= v {
                return Err(Error::Invalid(format!("token id {t} outside vocabulary")));
            }
            let mut h = vec![0.0; v];
            h[t] = 1.0;
            for iv in interventions {
                if iv.policy.covers(p, prompt_len) {
                    for (x, a) in h.iter_mut().zip(&iv.additive) {
                        *x += a;
                    }
                }
            }
            let mut out = vec![0.0; v];
            for (hv, row) in h.iter().zip(&self.table) {
                if *hv != 0.0 {
                    for (o, w) in out.iter_mut().zip(row) {
                        *o += hv * w;
                    }
                }
            }
            logits.push(out);
            rows.push(h);
        }
        Ok(ForwardOutput {
            logits,
            capture: capture_layer.map(|layer| ResidualActivation { layer, rows }),
        })
    }
}
