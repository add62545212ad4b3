//! Prompt assembly: template vectors plus entity fillers become model input.
//!
//! Object-first layout. For the subject-predicting prompt the object blank
//! holds `[MASK]` and the subject is filled as embedding vectors; for the
//! symmetric prompt a candidate embedding fills the object blank and exactly
//! one subject token is masked, the rest staying as token ids.

use crate::error::{Error, Result};
use crate::mlm::{Mlm, Slot, SlotSequence, TokenId};
use crate::prompt::template::Template;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    /// Predict the object: `[MASK]` at the object blank.
    Orig,
    /// Predict a subject token: candidate at the object blank.
    Sym,
}

/// A fully assembled model input plus bookkeeping for gradient routing.
#[derive(Debug, Clone)]
pub struct AssembledPrompt<S> {
    pub kind: PromptKind,
    pub template: Template,
    pub slots: SlotSequence<S>,
    /// Sequence positions of the template's learned vectors, in template order.
    pub vector_positions: Vec<usize>,
    /// The single mask position.
    pub mask_position: usize,
    pub subject_tokens: Vec<TokenId>,
    /// Candidate filling the object blank (`Sym` only).
    pub candidate: Option<TokenId>,
    /// Which subject token is masked (`Sym` only).
    pub masked_subject_index: Option<usize>,
}

fn push_vectors<S: Scalar>(
    slots: &mut Vec<Slot<S>>,
    positions: &mut Vec<usize>,
    vectors: &[Vec<S>],
    range: std::ops::Range<usize>,
) {
    for vi in range {
        positions.push(slots.len());
        slots.push(Slot::Vector(vectors[vi].clone()));
    }
}

fn check_vectors<S: Scalar>(template: &Template, vectors: &[Vec<S>]) -> Result<()> {
    if vectors.len() != template.vector_count() {
        return Err(Error::config(format!(
            "expected {} template vectors, got {}",
            template.vector_count(),
            vectors.len()
        )));
    }
    Ok(())
}

/// Object-predicting prompt: `[MASK]` at the object blank, subject filled
/// with its embedding vectors.
pub fn assemble_orig<S: Scalar>(
    template: &Template,
    vectors: &[Vec<S>],
    subject_tokens: &[TokenId],
    mlm: &Mlm<S>,
) -> Result<AssembledPrompt<S>> {
    check_vectors(template, vectors)?;
    if subject_tokens.is_empty() {
        return Err(Error::config("empty subject"));
    }
    let mut slots: Vec<Slot<S>> = Vec::with_capacity(template.assembled_len(subject_tokens.len()));
    let mut vector_positions = Vec::with_capacity(template.vector_count());

    push_vectors(&mut slots, &mut vector_positions, vectors, 0..template.n);
    let mask_position = slots.len();
    slots.push(Slot::Token(mlm.vocab.mask_id()));
    push_vectors(&mut slots, &mut vector_positions, vectors, template.n..template.n + template.m);
    for emb in mlm.embed(subject_tokens)? {
        slots.push(Slot::Vector(emb));
    }
    push_vectors(
        &mut slots,
        &mut vector_positions,
        vectors,
        template.n + template.m..template.vector_count(),
    );

    let slots = SlotSequence::new(slots, &mlm.vocab)?;
    debug_assert_eq!(slots.mask_positions(), &[mask_position]);
    Ok(AssembledPrompt {
        kind: PromptKind::Orig,
        template: *template,
        slots,
        vector_positions,
        mask_position,
        subject_tokens: subject_tokens.to_vec(),
        candidate: None,
        masked_subject_index: None,
    })
}

/// Subject-predicting prompt for one candidate: candidate embedding at the
/// object blank, subject token `masked_subject_index` replaced by `[MASK]`.
pub fn assemble_sym<S: Scalar>(
    template: &Template,
    vectors: &[Vec<S>],
    candidate: TokenId,
    subject_tokens: &[TokenId],
    masked_subject_index: usize,
    mlm: &Mlm<S>,
) -> Result<AssembledPrompt<S>> {
    check_vectors(template, vectors)?;
    if subject_tokens.is_empty() {
        return Err(Error::config("empty subject"));
    }
    if masked_subject_index >= subject_tokens.len() {
        return Err(Error::config(format!(
            "masked subject index {masked_subject_index} out of range for {}-token subject",
            subject_tokens.len()
        )));
    }
    let mut slots: Vec<Slot<S>> = Vec::with_capacity(template.assembled_len(subject_tokens.len()));
    let mut vector_positions = Vec::with_capacity(template.vector_count());

    push_vectors(&mut slots, &mut vector_positions, vectors, 0..template.n);
    let cand_emb = mlm.embed(&[candidate])?.pop().expect("one embedding");
    slots.push(Slot::Vector(cand_emb));
    push_vectors(&mut slots, &mut vector_positions, vectors, template.n..template.n + template.m);
    let mut mask_position = 0;
    for (j, &tok) in subject_tokens.iter().enumerate() {
        if j == masked_subject_index {
            mask_position = slots.len();
            slots.push(Slot::Token(mlm.vocab.mask_id()));
        } else {
            slots.push(Slot::Token(tok));
        }
    }
    push_vectors(
        &mut slots,
        &mut vector_positions,
        vectors,
        template.n + template.m..template.vector_count(),
    );

    let slots = SlotSequence::new(slots, &mlm.vocab)?;
    debug_assert_eq!(slots.mask_positions(), &[mask_position]);
    Ok(AssembledPrompt {
        kind: PromptKind::Sym,
        template: *template,
        slots,
        vector_positions,
        mask_position,
        subject_tokens: subject_tokens.to_vec(),
        candidate: Some(candidate),
        masked_subject_index: Some(masked_subject_index),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlm::{MlmConfig, Vocab};

    fn setup() -> (Mlm<f64>, Vec<Vec<f64>>, Template) {
        let vocab = Vocab::build((0..10).map(|i| format!("w{i}")));
        let config = MlmConfig {
            layers: 1,
            heads: 2,
            dim: 8,
            ff_dim: 16,
            max_seq: 20,
            tied_output: true,
        };
        let mlm = Mlm::new(vocab, config, 1).unwrap();
        let template = Template::default();
        let vectors: Vec<Vec<f64>> = (0..9).map(|t| vec![0.01 * t as f64; 8]).collect();
        (mlm, vectors, template)
    }

    #[test]
    fn orig_single_token_subject_has_eleven_slots() {
        let (mlm, vectors, template) = setup();
        let p = assemble_orig(&template, &vectors, &[4], &mlm).unwrap();
        assert_eq!(p.slots.len(), 11);
        assert_eq!(p.slots.mask_positions().len(), 1);
        assert_eq!(p.mask_position, template.object_blank_index());
    }

    #[test]
    fn orig_three_token_subject_has_thirteen_slots_one_mask() {
        let (mlm, vectors, template) = setup();
        let p = assemble_orig(&template, &vectors, &[4, 5, 6], &mlm).unwrap();
        assert_eq!(p.slots.len(), 13);
        assert_eq!(p.slots.mask_positions().len(), 1);
    }

    #[test]
    fn orig_empty_subject_errors() {
        let (mlm, vectors, template) = setup();
        assert!(assemble_orig(&template, &vectors, &[], &mlm).is_err());
    }

    #[test]
    fn sym_masks_each_position_distinctly() {
        let (mlm, vectors, template) = setup();
        let subject = [4, 5, 6];
        let prompts: Vec<_> = (0..3)
            .map(|j| assemble_sym(&template, &vectors, 7, &subject, j, &mlm).unwrap())
            .collect();
        let mask_positions: Vec<usize> = prompts.iter().map(|p| p.mask_position).collect();
        assert_eq!(mask_positions, vec![7, 8, 9]);
        // Non-masked subject tokens stay token ids.
        for (j, p) in prompts.iter().enumerate() {
            for (jj, &tok) in subject.iter().enumerate() {
                let slot = p.slots.slot(template.subject_start_index() + jj);
                if jj == j {
                    assert_eq!(slot, &Slot::Token(mlm.vocab.mask_id()));
                } else {
                    assert_eq!(slot, &Slot::Token(tok));
                }
            }
        }
    }

    #[test]
    fn sym_out_of_range_index_errors() {
        let (mlm, vectors, template) = setup();
        assert!(assemble_sym(&template, &vectors, 7, &[4], 1, &mlm).is_err());
    }

    #[test]
    fn sym_prompts_differ_only_at_object_blank() {
        let (mlm, vectors, template) = setup();
        let a = assemble_sym(&template, &vectors, 7, &[4, 5], 0, &mlm).unwrap();
        let b = assemble_sym(&template, &vectors, 8, &[4, 5], 0, &mlm).unwrap();
        let blank = template.object_blank_index();
        for i in 0..a.slots.len() {
            if i == blank {
                assert_ne!(a.slots.slot(i), b.slots.slot(i));
            } else {
                assert_eq!(a.slots.slot(i), b.slots.slot(i));
            }
        }
    }

    #[test]
    fn sym_object_blank_holds_candidate_embedding() {
        let (mlm, vectors, template) = setup();
        let p = assemble_sym(&template, &vectors, 7, &[4], 0, &mlm).unwrap();
        match p.slots.slot(template.object_blank_index()) {
            Slot::Vector(v) => assert_eq!(v, &mlm.embed(&[7]).unwrap()[0]),
            s => panic!("expected vector slot, got {s:?}"),
        }
    }
}
