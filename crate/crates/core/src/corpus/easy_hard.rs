//! Easy/hard partition of the test split.
//!
//! A test triple is easy when a relation-wise majority-class predictor fit
//! on the training split already guesses its gold object.

use crate::corpus::types::FactDataset;
use crate::error::{Error, Result};

/// Returns one flag per `splits.test` entry: `true` = easy.
pub fn split_easy_hard(dataset: &FactDataset) -> Result<Vec<bool>> {
    let majority = dataset.train_majority_objects();
    dataset
        .splits
        .test
        .iter()
        .map(|&i| {
            let t = &dataset.triples[i];
            let pred = majority.get(&t.relation).ok_or_else(|| {
                Error::config(format!(
                    "relation {} absent from training split",
                    dataset.relations[t.relation].id
                ))
            })?;
            Ok(*pred == t.object)
        })
        .collect()
}
