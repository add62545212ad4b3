//! Rendering a fact dataset into a whitespace-tokenized text corpus.
//!
//! Each fact becomes at least one subject-first sentence; optionally an
//! object-first sentence; skewed relations add the extra text that creates
//! their pathology (hub co-mentions, broad-term background chatter).

use crate::corpus::config::CorpusConfig;
use crate::corpus::generate::WordGen;
use crate::corpus::types::{FactDataset, SkewProfile};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// One rendered sentence plus the token spans occupied by entity surfaces.
/// Spans drive whole-entity masking during backbone pretraining.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    /// (start, len) pairs, non-overlapping, in order.
    pub entity_spans: Vec<(usize, usize)>,
}

/// Why a sentence exists; used by statistics and tests, not by training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SentenceKind {
    Forward,
    Inverse,
    Comention,
    Background,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextCorpus {
    pub sentences: Vec<Sentence>,
    pub kinds: Vec<SentenceKind>,
}

impl TextCorpus {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    /// One sentence per line, tokens joined by single spaces.
    pub fn save_text(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for s in &self.sentences {
            writeln!(out, "{}", s.tokens.join(" "))?;
        }
        Ok(())
    }

    /// Sidecar with one JSON span list per corpus line.
    pub fn save_spans(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for s in &self.sentences {
            writeln!(out, "{}", serde_json::to_string(&s.entity_spans).unwrap())?;
        }
        Ok(())
    }

    /// Loads a corpus from a text file, optionally with its span sidecar.
    /// Without the sidecar every sentence has no recorded entity spans.
    pub fn load(text_path: &Path, spans_path: Option<&Path>) -> Result<Self> {
        let file = std::fs::File::open(text_path)?;
        let mut sentences = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            let tokens: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
            if !tokens.is_empty() {
                sentences.push(Sentence {
                    tokens,
                    entity_spans: Vec::new(),
                });
            }
        }
        if let Some(sp) = spans_path {
            let file = std::fs::File::open(sp)?;
            for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
                let line = line?;
                if i >= sentences.len() {
                    return Err(Error::format(
                        sp.display().to_string(),
                        Some(i + 1),
                        "more span lines than corpus sentences",
                    ));
                }
                let spans: Vec<(usize, usize)> = serde_json::from_str(&line).map_err(|e| {
                    Error::format(sp.display().to_string(), Some(i + 1), e.to_string())
                })?;
                sentences[i].entity_spans = spans;
            }
        }
        let kinds = vec![SentenceKind::Forward; sentences.len()];
        Ok(TextCorpus { sentences, kinds })
    }
}

/// Connector words for one relation.
struct RelationWords {
    forward: Vec<String>,
    inverse: Vec<String>,
    comention: Vec<String>,
    background: Vec<String>,
}

/// Small-lambda Poisson draw (Knuth).
fn poisson<R: Rng>(rng: &mut R, lambda: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let limit = (-lambda).exp();
    let mut k = 0usize;
    let mut p = 1.0f64;
    loop {
        p *= rng.gen::<f64>();
        if p <= limit {
            return k;
        }
        k += 1;
    }
}

/// Renders every requested split of `dataset` into sentences. Connector
/// words are minted deterministically after the dataset's entity words, so
/// the full pipeline vocabulary is a function of (config, seed) only.
pub fn render_corpus(dataset: &FactDataset, config: &CorpusConfig, seed: u64) -> Result<TextCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e17_ab1e);
    // Resume word minting past the entity surfaces.
    let mut words = WordGen::new();
    let used: usize = dataset.entities.iter().map(|e| e.surface.len()).sum();
    words.words(used);

    let rel_words: Vec<RelationWords> = dataset
        .relations
        .iter()
        .map(|_| {
            let forward = words.words(2);
            let inverse = words.words(2);
            let comention = if config.render.comention_uses_relation_words {
                forward.clone()
            } else {
                words.words(2)
            };
            let background = words.words(2);
            RelationWords {
                forward,
                inverse,
                comention,
                background,
            }
        })
        .collect();

    let mut indices: Vec<usize> = if config.render.include_all_splits {
        (0..dataset.triples.len()).collect()
    } else {
        dataset.splits.train.clone()
    };
    indices.sort_unstable();

    let mut corpus = TextCorpus::default();
    let push = |corpus: &mut TextCorpus, kind: SentenceKind, parts: Vec<(Vec<String>, bool)>| {
        let mut tokens = Vec::new();
        let mut spans = Vec::new();
        for (piece, is_entity) in parts {
            if is_entity {
                spans.push((tokens.len(), piece.len()));
            }
            tokens.extend(piece);
        }
        corpus.sentences.push(Sentence {
            tokens,
            entity_spans: spans,
        });
        corpus.kinds.push(kind);
    };

    for &i in &indices {
        let t = &dataset.triples[i];
        let rw = &rel_words[t.relation];
        let subj = dataset.entity(t.subject).surface.clone();
        let obj = dataset.entity(t.object).surface.clone();
        push(
            &mut corpus,
            SentenceKind::Forward,
            vec![(subj.clone(), true), (rw.forward.clone(), false), (obj.clone(), true)],
        );
        if rng.gen::<f64>() < config.render.p_inverse {
            push(
                &mut corpus,
                SentenceKind::Inverse,
                vec![(obj.clone(), true), (rw.inverse.clone(), false), (subj.clone(), true)],
            );
        }
        match dataset.relation(t.relation).skew_profile {
            SkewProfile::Cooccurrence => {
                let n = poisson(&mut rng, config.render.comention_rate);
                for _ in 0..n {
                    let d = t.distractors[rng.gen_range(0..t.distractors.len())];
                    let dsurf = dataset.entity(d).surface.clone();
                    push(
                        &mut corpus,
                        SentenceKind::Comention,
                        vec![(subj.clone(), true), (rw.comention.clone(), false), (dsurf, true)],
                    );
                }
            }
            SkewProfile::Scope => {
                let n = poisson(&mut rng, config.render.scope_background_rate);
                for _ in 0..n {
                    let d = t.distractors[rng.gen_range(0..t.distractors.len())];
                    let dsurf = dataset.entity(d).surface.clone();
                    push(
                        &mut corpus,
                        SentenceKind::Background,
                        vec![(rw.background.clone(), false), (dsurf, true)],
                    );
                }
            }
            _ => {}
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::config::CorpusConfig;
    use crate::corpus::generate::gen_kb;

    fn cfg(p_inv: f64, rate: f64) -> CorpusConfig {
        CorpusConfig::from_toml_str(&format!(
            r#"
            [[entity_types]]
            name = "person"
            count = 400
            [[entity_types]]
            name = "place"
            count = 20
            surface_len = [1, 1]
            [[relations]]
            id = "origin"
            subject_type = "person"
            answer_type = "place"
            skew = "cooccurrence"
            triples = 300
            distractors = 2
            special_pool = 4
            [render]
            p_inverse = {p_inv}
            comention_rate = {rate}
            "#
        ))
        .unwrap()
    }

    #[test]
    fn zero_p_inverse_renders_no_inverse_sentences() {
        let c = cfg(0.0, 0.0);
        let ds = gen_kb(&c, 2).unwrap();
        let corpus = render_corpus(&ds, &c, 2).unwrap();
        assert!(corpus.kinds.iter().all(|&k| k != SentenceKind::Inverse));
    }

    #[test]
    fn forward_sentence_orders_subject_before_object() {
        let c = cfg(0.0, 0.0);
        let ds = gen_kb(&c, 2).unwrap();
        let corpus = render_corpus(&ds, &c, 2).unwrap();
        let t = &ds.triples[0];
        let subj = ds.entity(t.subject).surface_text();
        let obj = ds.entity(t.object).surface_text();
        let line = corpus.sentences[0].tokens.join(" ");
        let si = line.find(&subj).expect("subject rendered");
        let oi = line.rfind(&obj).expect("object rendered");
        assert!(si < oi, "subject must precede object in {line}");
    }

    #[test]
    fn comention_rate_matches_poisson_mean() {
        let c = cfg(0.0, 3.0);
        let ds = gen_kb(&c, 9).unwrap();
        let corpus = render_corpus(&ds, &c, 9).unwrap();
        let n_forward = corpus.kinds.iter().filter(|&&k| k == SentenceKind::Forward).count();
        let n_com = corpus.kinds.iter().filter(|&&k| k == SentenceKind::Comention).count();
        let mean = n_com as f64 / n_forward as f64;
        assert!((mean - 3.0).abs() <= 0.3, "mean co-mentions {mean}");
    }

    #[test]
    fn save_and_load_round_trip() {
        let c = cfg(0.5, 1.0);
        let ds = gen_kb(&c, 4).unwrap();
        let corpus = render_corpus(&ds, &c, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let txt = dir.path().join("corpus.txt");
        let spans = dir.path().join("corpus.spans.jsonl");
        corpus.save_text(&txt).unwrap();
        corpus.save_spans(&spans).unwrap();
        let loaded = TextCorpus::load(&txt, Some(&spans)).unwrap();
        assert_eq!(loaded.sentences, corpus.sentences);
    }

    #[test]
    fn determinism_same_seed_same_bytes() {
        let c = cfg(0.5, 2.0);
        let ds = gen_kb(&c, 6).unwrap();
        let a = render_corpus(&ds, &c, 6).unwrap();
        let b = render_corpus(&ds, &c, 6).unwrap();
        assert_eq!(a, b);
    }
}
