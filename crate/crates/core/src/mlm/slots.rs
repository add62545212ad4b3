//! Model input: a sequence of slots, each a token id or a raw vector.

use crate::error::{Error, Result};
use crate::mlm::vocab::{TokenId, Vocab};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum Slot<S> {
    Token(TokenId),
    /// An input embedding supplied directly, bypassing the lookup table.
    Vector(Vec<S>),
}

/// An input sequence for the backbone. Mask positions are derived from the
/// slots themselves: every `Token(mask_id)` slot is a mask position.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSequence<S> {
    slots: Vec<Slot<S>>,
    mask_positions: Vec<usize>,
}

impl<S: Scalar> SlotSequence<S> {
    pub fn new(slots: Vec<Slot<S>>, vocab: &Vocab) -> Result<Self> {
        let mask_id = vocab.mask_id();
        let mut mask_positions = Vec::new();
        for (i, slot) in slots.iter().enumerate() {
            match slot {
                Slot::Token(t) => {
                    if *t >= vocab.len() {
                        return Err(Error::config(format!("slot {i}: token id {t} out of range")));
                    }
                    if *t == mask_id {
                        mask_positions.push(i);
                    }
                }
                Slot::Vector(v) => {
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::numeric(format!("slot {i}: non-finite vector entry")));
                    }
                }
            }
        }
        Ok(SlotSequence {
            slots,
            mask_positions,
        })
    }

    pub fn from_token_ids(ids: &[TokenId], vocab: &Vocab) -> Result<Self> {
        Self::new(ids.iter().map(|&t| Slot::Token(t)).collect(), vocab)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[Slot<S>] {
        &self.slots
    }

    pub fn slot(&self, i: usize) -> &Slot<S> {
        &self.slots[i]
    }

    pub fn mask_positions(&self) -> &[usize] {
        &self.mask_positions
    }

    pub fn is_mask(&self, pos: usize) -> bool {
        self.mask_positions.contains(&pos)
    }

    /// Indices of raw-vector slots, in order.
    pub fn vector_positions(&self) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| matches!(s, Slot::Vector(_)).then_some(i))
            .collect()
    }
}
