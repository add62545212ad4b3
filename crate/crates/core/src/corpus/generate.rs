//! Synthetic knowledge-base generation with controllable skew pathologies.

use crate::corpus::config::CorpusConfig;
use crate::corpus::easy_hard::split_easy_hard;
use crate::corpus::types::{Entity, EntityId, FactDataset, FactTriple, RelationSpec, SkewProfile, Splits};
use crate::error::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic pseudo-word minting: every call yields a distinct
/// consonant-vowel word, independent of any rng state.
pub struct WordGen {
    next: usize,
}

const CONSONANTS: [char; 14] = ['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];
const SYLLABLES: usize = CONSONANTS.len() * VOWELS.len();

impl WordGen {
    pub fn new() -> Self {
        WordGen { next: 0 }
    }

    fn syllable(idx: usize) -> (char, char) {
        (CONSONANTS[idx / VOWELS.len()], VOWELS[idx % VOWELS.len()])
    }

    /// Next unique word: two or more syllables, bijective base-70 digits.
    /// Skipping the one-syllable range keeps the enumeration collision-free.
    pub fn word(&mut self) -> String {
        let mut n = self.next + SYLLABLES;
        self.next += 1;
        let mut syls = Vec::new();
        loop {
            syls.push(n % SYLLABLES);
            n /= SYLLABLES;
            if n == 0 {
                break;
            }
            n -= 1; // bijective numeration keeps every length reachable
        }
        let mut w = String::new();
        for &s in syls.iter().rev() {
            let (c, v) = Self::syllable(s);
            w.push(c);
            w.push(v);
        }
        w
    }

    pub fn words(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word()).collect()
    }
}

impl Default for WordGen {
    fn default() -> Self {
        Self::new()
    }
}

/// Draw `k` distinct items from `pool`, excluding `exclude`.
fn sample_distinct<R: Rng>(rng: &mut R, pool: &[EntityId], k: usize, exclude: EntityId) -> Vec<EntityId> {
    let mut candidates: Vec<EntityId> = pool.iter().copied().filter(|&e| e != exclude).collect();
    candidates.shuffle(rng);
    candidates.truncate(k);
    candidates
}

/// Generates a dataset whose statistics follow the configured skew profiles.
/// All randomness flows from `seed`; identical (config, seed) pairs produce
/// byte-identical datasets.
pub fn gen_kb(config: &CorpusConfig, seed: u64) -> Result<FactDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = WordGen::new();

    // Entity tables, one block per configured type.
    let mut entities = Vec::new();
    for t in &config.entity_types {
        for _ in 0..t.count {
            let len = rng.gen_range(t.surface_len.0..=t.surface_len.1);
            entities.push(Entity {
                id: entities.len(),
                surface: words.words(len),
                type_tag: t.name.clone(),
            });
        }
    }
    let of_type = |tag: &str| -> Vec<EntityId> {
        entities
            .iter()
            .filter(|e| e.type_tag == tag)
            .map(|e| e.id)
            .collect()
    };

    let mut relations = Vec::new();
    let mut triples = Vec::new();
    for rc in &config.relations {
        let rel_idx = relations.len();
        relations.push(RelationSpec {
            id: rc.id.clone(),
            cardinality: rc.cardinality,
            subject_type: rc.subject_type.clone(),
            answer_type: rc.answer_type.clone(),
            skew_profile: rc.skew,
            majority_fraction: rc.majority_fraction,
        });

        let mut subjects = of_type(&rc.subject_type);
        subjects.shuffle(&mut rng);
        subjects.truncate(rc.triples);

        let answers = of_type(&rc.answer_type);
        // The special pool is the leading block of the answer type: hubs for
        // cooccurrence skew, broad terms for scope skew.
        let pool = rc.special_pool.min(answers.len().saturating_sub(1));
        let (special, rest) = answers.split_at(pool);

        let golds: Vec<EntityId> = match rc.skew {
            SkewProfile::Uniform => (0..rc.triples)
                .map(|_| answers[rng.gen_range(0..answers.len())])
                .collect(),
            SkewProfile::Scope | SkewProfile::Cooccurrence => (0..rc.triples)
                .map(|_| rest[rng.gen_range(0..rest.len())])
                .collect(),
            SkewProfile::LabelImbalance => {
                // Deterministic majority count keeps the measured fraction
                // tight around the configured value.
                let majority = answers[0];
                let n_major = (rc.majority_fraction * rc.triples as f64).round() as usize;
                let minors = &answers[1..];
                let mut golds: Vec<EntityId> = (0..rc.triples)
                    .map(|i| {
                        if i < n_major {
                            majority
                        } else {
                            minors[rng.gen_range(0..minors.len())]
                        }
                    })
                    .collect();
                golds.shuffle(&mut rng);
                golds
            }
        };

        for (subject, object) in subjects.into_iter().zip(golds) {
            let distractors = match rc.skew {
                SkewProfile::Cooccurrence | SkewProfile::Scope => {
                    sample_distinct(&mut rng, special, rc.distractors, object)
                }
                _ => sample_distinct(&mut rng, &answers, rc.distractors, object),
            };
            triples.push(FactTriple {
                subject,
                relation: rel_idx,
                object,
                distractors,
            });
        }
    }

    // Stratified split: every relation lands in every non-empty split.
    let mut splits = Splits::default();
    let mut start = 0;
    for rc in &config.relations {
        let n = rc.triples;
        let mut idx: Vec<usize> = (start..start + n).collect();
        idx.shuffle(&mut rng);
        let n_dev = (config.splits.dev * n as f64).round() as usize;
        let n_test = (config.splits.test * n as f64).round() as usize;
        let n_train = n.saturating_sub(n_dev + n_test).max(1);
        let n_dev = n_dev.min(n - n_train);
        let n_test = n - n_train - n_dev;
        splits.train.extend(&idx[..n_train]);
        splits.dev.extend(&idx[n_train..n_train + n_dev]);
        splits.test.extend(&idx[n_train + n_dev..n_train + n_dev + n_test]);
        start += n;
    }
    splits.train.sort_unstable();
    splits.dev.sort_unstable();
    splits.test.sort_unstable();

    let mut dataset = FactDataset {
        entities,
        relations,
        triples,
        splits,
        easy_mask: Vec::new(),
    };
    dataset.easy_mask = split_easy_hard(&dataset)?;
    dataset.validate()?;
    Ok(dataset)
}
