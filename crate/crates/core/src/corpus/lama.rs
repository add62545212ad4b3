//! Line-delimited fact-file ingestion (LAMA-compatible field names).

use crate::corpus::easy_hard::split_easy_hard;
use crate::corpus::types::{
    Cardinality, Entity, EntityId, FactDataset, FactTriple, RelationSpec, SkewProfile, Splits,
};
use crate::error::{Error, Result};
use crate::mlm::vocab::Vocab;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

/// How to treat surface tokens that are not in the active vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownTokenPolicy {
    /// Drop the whole record.
    #[default]
    Drop,
    /// Replace unknown tokens with the unknown-token symbol.
    MapToUnk,
}

#[derive(Debug, Serialize, Deserialize)]
struct LamaRecord {
    sub_label: String,
    relation: String,
    obj_label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LamaLoadStats {
    pub kept: usize,
    /// Records whose object is not a single token under the vocabulary.
    pub dropped_multi_token: usize,
    /// Records dropped by [`UnknownTokenPolicy::Drop`].
    pub dropped_unknown: usize,
}

/// Loads a line-delimited fact file into a dataset. Splits are assigned
/// per relation in file order using `fractions` (train, dev, test); train
/// receives at least one triple per relation.
pub fn load_lama_jsonl(
    path: &Path,
    vocab: &Vocab,
    policy: UnknownTokenPolicy,
    fractions: (f64, f64, f64),
) -> Result<(FactDataset, LamaLoadStats)> {
    let total = fractions.0 + fractions.1 + fractions.2;
    if (total - 1.0).abs() > 1e-9 || fractions.0 <= 0.0 {
        return Err(Error::config(format!(
            "split fractions must sum to 1 with train > 0, got {fractions:?}"
        )));
    }
    let file = std::fs::File::open(path)?;
    let path_str = path.display().to_string();

    let mut stats = LamaLoadStats::default();
    let mut entities: Vec<Entity> = Vec::new();
    let mut by_surface: BTreeMap<Vec<String>, EntityId> = BTreeMap::new();
    let mut relations: Vec<RelationSpec> = Vec::new();
    let mut rel_by_id: BTreeMap<String, usize> = BTreeMap::new();
    let mut triples: Vec<FactTriple> = Vec::new();

    let intern = |entities: &mut Vec<Entity>,
                      by_surface: &mut BTreeMap<Vec<String>, EntityId>,
                      surface: Vec<String>|
     -> EntityId {
        if let Some(&id) = by_surface.get(&surface) {
            return id;
        }
        let id = entities.len();
        entities.push(Entity {
            id,
            surface: surface.clone(),
            type_tag: "entity".to_string(),
        });
        by_surface.insert(surface, id);
        id
    };

    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LamaRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(&path_str, Some(lineno + 1), e.to_string()))?;

        let mut sub: Vec<String> = rec.sub_label.split_whitespace().map(str::to_owned).collect();
        let obj: Vec<String> = rec.obj_label.split_whitespace().map(str::to_owned).collect();
        if sub.is_empty() || obj.is_empty() {
            return Err(Error::format(
                &path_str,
                Some(lineno + 1),
                "empty subject or object label",
            ));
        }
        if obj.len() != 1 {
            stats.dropped_multi_token += 1;
            continue;
        }
        let unknown_obj = !vocab.contains(&obj[0]);
        let unknown_sub = sub.iter().any(|t| !vocab.contains(t));
        if unknown_obj || unknown_sub {
            match policy {
                UnknownTokenPolicy::Drop => {
                    stats.dropped_unknown += 1;
                    continue;
                }
                UnknownTokenPolicy::MapToUnk => {
                    for t in sub.iter_mut() {
                        if !vocab.contains(t) {
                            *t = Vocab::UNK.to_string();
                        }
                    }
                    // A fully unknown object would make the gold the unknown
                    // symbol; keep it, as asked.
                }
            }
        }
        let obj = if unknown_obj && policy == UnknownTokenPolicy::MapToUnk {
            vec![Vocab::UNK.to_string()]
        } else {
            obj
        };

        let rel_idx = *rel_by_id.entry(rec.relation.clone()).or_insert_with(|| {
            relations.push(RelationSpec {
                id: rec.relation.clone(),
                cardinality: Cardinality::NM,
                subject_type: "entity".to_string(),
                answer_type: "entity".to_string(),
                skew_profile: SkewProfile::Uniform,
                majority_fraction: 0.0,
            });
            relations.len() - 1
        });
        let subject = intern(&mut entities, &mut by_surface, sub);
        let object = intern(&mut entities, &mut by_surface, obj);
        triples.push(FactTriple {
            subject,
            relation: rel_idx,
            object,
            distractors: Vec::new(),
        });
        stats.kept += 1;
    }

    // Per-relation contiguous split in file order: deterministic without a seed.
    let mut splits = Splits::default();
    for rel in 0..relations.len() {
        let idx: Vec<usize> = (0..triples.len()).filter(|&i| triples[i].relation == rel).collect();
        let n = idx.len();
        let n_dev = (fractions.1 * n as f64).round() as usize;
        let n_test = (fractions.2 * n as f64).round() as usize;
        let n_train = n.saturating_sub(n_dev + n_test).max(1);
        let n_dev = n_dev.min(n - n_train);
        let n_test = n - n_train - n_dev;
        splits.train.extend(&idx[..n_train]);
        splits.dev.extend(&idx[n_train..n_train + n_dev]);
        splits.test.extend(&idx[n_train + n_dev..n_train + n_dev + n_test]);
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
    Ok((dataset, stats))
}

/// Writes a dataset as a line-delimited fact file (one record per triple,
/// dataset order).
pub fn write_lama_jsonl(dataset: &FactDataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in &dataset.triples {
        let rec = LamaRecord {
            sub_label: dataset.entity(t.subject).surface_text(),
            relation: dataset.relation(t.relation).id.clone(),
            obj_label: dataset.entity(t.object).surface_text(),
        };
        writeln!(out, "{}", serde_json::to_string(&rec).unwrap())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn vocab_of(words: &[&str]) -> Vocab {
        Vocab::build(words.iter().map(|s| s.to_string()))
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn loads_single_record() {
        let v = vocab_of(&["luxembourg", "europe"]);
        let f = write_lines(&[r#"{"sub_label":"luxembourg","relation":"P30","obj_label":"europe"}"#]);
        let (ds, stats) = load_lama_jsonl(f.path(), &v, UnknownTokenPolicy::Drop, (1.0, 0.0, 0.0)).unwrap();
        assert_eq!(stats.kept, 1);
        assert_eq!(ds.triples.len(), 1);
        assert_eq!(ds.relations[0].id, "P30");
        assert_eq!(ds.entity(ds.triples[0].subject).surface_text(), "luxembourg");
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let v = vocab_of(&[]);
        let f = write_lines(&[]);
        let (ds, stats) = load_lama_jsonl(f.path(), &v, UnknownTokenPolicy::Drop, (0.8, 0.1, 0.1)).unwrap();
        assert_eq!(ds.triples.len(), 0);
        assert_eq!(stats.kept, 0);
    }

    #[test]
    fn multi_token_objects_dropped_with_count() {
        let v = vocab_of(&["a", "b", "c", "d", "x", "y"]);
        let f = write_lines(&[
            r#"{"sub_label":"a","relation":"r","obj_label":"x"}"#,
            r#"{"sub_label":"b","relation":"r","obj_label":"y"}"#,
            r#"{"sub_label":"c","relation":"r","obj_label":"x"}"#,
            r#"{"sub_label":"d","relation":"r","obj_label":"x y"}"#,
        ]);
        let (ds, stats) = load_lama_jsonl(f.path(), &v, UnknownTokenPolicy::Drop, (1.0, 0.0, 0.0)).unwrap();
        assert_eq!(ds.triples.len(), 3);
        assert_eq!(stats.dropped_multi_token, 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let v = vocab_of(&["a", "x"]);
        let f = write_lines(&[
            r#"{"sub_label":"a","relation":"r","obj_label":"x"}"#,
            r#"{"sub_label":"a",BROKEN"#,
        ]);
        let err = load_lama_jsonl(f.path(), &v, UnknownTokenPolicy::Drop, (1.0, 0.0, 0.0)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "unexpected error: {msg}");
    }

    #[test]
    fn unknown_policy_map_to_unk() {
        let v = vocab_of(&["x"]);
        let f = write_lines(&[r#"{"sub_label":"nope","relation":"r","obj_label":"x"}"#]);
        let (ds, stats) =
            load_lama_jsonl(f.path(), &v, UnknownTokenPolicy::MapToUnk, (1.0, 0.0, 0.0)).unwrap();
        assert_eq!(stats.kept, 1);
        assert_eq!(ds.entity(ds.triples[0].subject).surface, vec![Vocab::UNK.to_string()]);
    }

    #[test]
    fn round_trip_through_file() {
        let v = vocab_of(&["a", "b", "x", "y"]);
        let f = write_lines(&[
            r#"{"sub_label":"a","relation":"r","obj_label":"x"}"#,
            r#"{"sub_label":"b","relation":"r","obj_label":"y"}"#,
        ]);
        let (ds, _) = load_lama_jsonl(f.path(), &v, UnknownTokenPolicy::Drop, (1.0, 0.0, 0.0)).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_lama_jsonl(&ds, out.path()).unwrap();
        let (ds2, _) = load_lama_jsonl(out.path(), &v, UnknownTokenPolicy::Drop, (1.0, 0.0, 0.0)).unwrap();
        assert_eq!(ds.triples, ds2.triples);
    }
}
