//! The relation-agnostic slot template.
//!
//! Layout with counts (n, m, k): n learned vectors, the object blank, m
//! learned vectors, the subject blank, k learned vectors. The object blank
//! comes first.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub n: usize,
    pub m: usize,
    pub k: usize,
}

impl Template {
    pub fn new(n: usize, m: usize, k: usize) -> Result<Self> {
        if n + m + k == 0 {
            return Err(Error::config("template needs at least one learned slot"));
        }
        Ok(Template { n, m, k })
    }

    /// Total learned vector slots.
    pub fn vector_count(&self) -> usize {
        self.n + self.m + self.k
    }

    /// Slot index of the object blank in the assembled sequence, given that
    /// the object blank occupies one slot.
    pub fn object_blank_index(&self) -> usize {
        self.n
    }

    /// Slot index where the subject tokens start, given the object blank
    /// occupies `object_len` slots (1 for every assembled prompt here).
    pub fn subject_start_index(&self) -> usize {
        self.n + 1 + self.m
    }

    /// Assembled length for a subject of `subject_len` tokens.
    pub fn assembled_len(&self, subject_len: usize) -> usize {
        self.vector_count() + 1 + subject_len
    }
}

impl Default for Template {
    fn default() -> Self {
        Template { n: 3, m: 3, k: 3 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_three_three_three() {
        let t = Template::default();
        assert_eq!(t.vector_count(), 9);
        assert_eq!(t.object_blank_index(), 3);
        assert_eq!(t.subject_start_index(), 7);
        assert_eq!(t.assembled_len(1), 11);
        assert_eq!(t.assembled_len(3), 13);
    }

    #[test]
    fn rejects_empty_template() {
        assert!(Template::new(0, 0, 0).is_err());
    }
}
