//! Token frequency tables derived from a rendered corpus.

use crate::corpus::render::TextCorpus;
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

/// Token counts plus the corpus total; relative frequencies and their
/// base-10 logs are derived on demand.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FreqTable {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl FreqTable {
    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    /// count / total, or None for unseen tokens.
    pub fn rel_freq(&self, token: &str) -> Option<f64> {
        let c = self.count(token);
        if c == 0 || self.total == 0 {
            None
        } else {
            Some(c as f64 / self.total as f64)
        }
    }

    /// log10 of the relative frequency, with `floor` substituted for
    /// unseen tokens.
    pub fn log10_rel(&self, token: &str, floor: f64) -> f64 {
        self.rel_freq(token).unwrap_or(floor).log10()
    }

    /// `token count` per line, tokens in lexicographic order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (tok, n) in &self.counts {
            writeln!(out, "{tok} {n}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let path_str = path.display().to_string();
        let mut table = FreqTable::default();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (tok, n) = match (it.next(), it.next(), it.next()) {
                (Some(t), Some(n), None) => (t, n),
                _ => {
                    return Err(Error::format(
                        &path_str,
                        Some(i + 1),
                        "expected `token count`",
                    ))
                }
            };
            let n: u64 = n.parse().map_err(|e| {
                Error::format(&path_str, Some(i + 1), format!("bad count: {e}"))
            })?;
            table.total += n;
            *table.counts.entry(tok.to_string()).or_default() += n;
        }
        Ok(table)
    }
}

/// Counts every token occurrence in the corpus.
pub fn word_freq(corpus: &TextCorpus) -> FreqTable {
    let mut table = FreqTable::default();
    for s in &corpus.sentences {
        for tok in &s.tokens {
            *table.counts.entry(tok.clone()).or_default() += 1;
            table.total += 1;
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::render::Sentence;

    fn corpus_of(lines: &[&str]) -> TextCorpus {
        let sentences = lines
            .iter()
            .map(|l| Sentence {
                tokens: l.split_whitespace().map(str::to_owned).collect(),
                entity_spans: vec![],
            })
            .collect();
        TextCorpus {
            sentences,
            kinds: vec![],
        }
    }

    #[test]
    fn basic_counts() {
        let t = word_freq(&corpus_of(&["a a b"]));
        assert_eq!(t.count("a"), 2);
        assert_eq!(t.count("b"), 1);
        assert_eq!(t.total, 3);
    }

    #[test]
    fn log10_of_one_in_thousand_is_minus_three() {
        let mut t = FreqTable::default();
        t.counts.insert("x".into(), 1);
        t.counts.insert("y".into(), 999);
        t.total = 1000;
        assert!((t.log10_rel("x", 1e-9) - (-3.0)).abs() < 1e-12);
    }

    #[test]
    fn counts_sum_to_corpus_length() {
        let corpus = corpus_of(&["a b c", "c d", "e"]);
        let t = word_freq(&corpus);
        let recount: u64 = corpus.sentences.iter().map(|s| s.tokens.len() as u64).sum();
        assert_eq!(t.total, recount);
        assert_eq!(t.counts.values().sum::<u64>(), recount);
    }

    #[test]
    fn unseen_token_uses_floor() {
        let t = word_freq(&corpus_of(&["a"]));
        assert!((t.log10_rel("zzz", 1e-9) - (-9.0)).abs() < 1e-12);
    }

    #[test]
    fn save_load_round_trip() {
        let t = word_freq(&corpus_of(&["a a b zeta"]));
        let f = tempfile::NamedTempFile::new().unwrap();
        t.save(f.path()).unwrap();
        let loaded = FreqTable::load(f.path()).unwrap();
        assert_eq!(t, loaded);
    }
}
