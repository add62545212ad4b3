//! Token vocabulary with fixed special symbols.

use crate::corpus::render::TextCorpus;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub type TokenId = usize;

/// Bijective token <-> id map. Ids 0..3 are always `[PAD]`, `[MASK]`,
/// `[UNK]`; remaining tokens sorted lexicographically for determinism.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, TokenId>,
}

impl Vocab {
    pub const PAD: &'static str = "[PAD]";
    pub const MASK: &'static str = "[MASK]";
    pub const UNK: &'static str = "[UNK]";

    pub fn build(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut set: std::collections::BTreeSet<String> = tokens.into_iter().collect();
        for special in [Self::PAD, Self::MASK, Self::UNK] {
            set.remove(special);
        }
        let mut all = vec![Self::PAD.to_string(), Self::MASK.to_string(), Self::UNK.to_string()];
        all.extend(set);
        Self::from_ordered(all)
    }

    /// Rebuild from an explicit ordering (checkpoint load path). Panics if
    /// specials are missing or tokens repeat.
    pub fn from_ordered(tokens: Vec<String>) -> Self {
        let index: BTreeMap<String, TokenId> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        assert_eq!(index.len(), tokens.len(), "duplicate tokens in vocab");
        for special in [Self::PAD, Self::MASK, Self::UNK] {
            assert!(index.contains_key(special), "vocab missing {special}");
        }
        Vocab { tokens, index }
    }

    pub fn from_corpus(corpus: &TextCorpus) -> Self {
        Self::build(corpus.sentences.iter().flat_map(|s| s.tokens.iter().cloned()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pad_id(&self) -> TokenId {
        0
    }

    pub fn mask_id(&self) -> TokenId {
        1
    }

    pub fn unk_id(&self) -> TokenId {
        2
    }

    /// Whitespace tokenization; out-of-vocabulary words map to `[UNK]`.
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .map(|w| self.get(w).unwrap_or_else(|| self.unk_id()))
            .collect()
    }

    pub fn encode_tokens(&self, tokens: &[String]) -> Vec<TokenId> {
        tokens
            .iter()
            .map(|w| self.get(w).unwrap_or_else(|| self.unk_id()))
            .collect()
    }
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        Vocab::from_ordered(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Vec<String> {
        v.tokens
    }
}
