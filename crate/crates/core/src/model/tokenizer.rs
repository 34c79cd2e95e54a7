use std::collections::HashMap;

use super::TokenId;

/// Characters of the reference 64-symbol vocabulary, in id order starting at 1.
/// Id 0 is the end-of-sequence marker.
pub const REFERENCE_ALPHABET: &str =
    "\n abcdefghijklmnopqrstuvwxyz0123456789.,:;!?'\"-()$%&/*+=@#[]<>_";

/// Character-level tokenizer.
///
/// Normalization: characters in the vocabulary pass through; otherwise the
/// lowercase form is tried, tabs and carriage returns become spaces, and
/// anything left maps to `_` when the vocabulary has it (dropped otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct CharTokenizer {
    symbols: Vec<Option<char>>,
    index: HashMap<char, TokenId>,
    eos: Option<TokenId>,
}

impl CharTokenizer {
    pub fn reference() -> Self {
        Self::from_alphabet(REFERENCE_ALPHABET, true)
    }

    /// Builds a tokenizer whose ids follow `alphabet` order. With `with_eos`
    /// id 0 is reserved for end-of-sequence and characters start at 1.
    pub fn from_alphabet(alphabet: &str, with_eos: bool) -> Self {
        let mut symbols = Vec::new();
        if with_eos {
            symbols.push(None);
        }
        let mut index = HashMap::new();
        for c in alphabet.chars() {
            if index.contains_key(&c) {
                continue;
            }
            index.insert(c, symbols.len() as TokenId);
            symbols.push(Some(c));
        }
        Self {
            symbols,
            index,
            eos: with_eos.then_some(0),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.symbols.len()
    }

    pub fn eos(&self) -> Option<TokenId> {
        self.eos
    }

    /// The characters of the vocabulary in id order, excluding end-of-sequence.
    pub fn alphabet(&self) -> String {
        self.symbols.iter().flatten().collect()
    }

    fn push_char(&self, c: char, out: &mut Vec<TokenId>) {
        if let Some(&id) = self.index.get(&c) {
            out.push(id);
            return;
        }
        if c == '\t' || c == '\r' {
            if let Some(&id) = self.index.get(&' ') {
                out.push(id);
            }
            return;
        }
        let mut mapped = false;
        for lower in c.to_lowercase() {
            if let Some(&id) = self.index.get(&lower) {
                out.push(id);
                mapped = true;
            }
        }
        if !mapped {
            if let Some(&id) = self.index.get(&'_') {
                out.push(id);
            }
        }
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(text.len());
        for c in text.chars() {
            self.push_char(c, &mut out);
        }
        out
    }

    pub fn decode(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .filter_map(|&t| self.symbols.get(t as usize).copied().flatten())
            .collect()
    }

    pub fn normalize(&self, text: &str) -> String {
        self.decode(&self.encode(text))
    }
}
