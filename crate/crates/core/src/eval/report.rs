//! Report emission: machine-readable JSON plus human-readable tables.
//!
//! Files carry the config echo and seed for reproducibility and contain no
//! timestamps, so identical runs emit identical bytes.

use crate::error::Result;
use crate::eval::bias::BiasReport;
use crate::eval::metrics::{EvalReport, Metrics};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub label: String,
    pub seed: u64,
    /// Echo of the configuration that produced this run.
    pub config: serde_json::Value,
    pub eval: EvalReport,
    pub bias: Option<BiasReport>,
}

impl RunReport {
    pub fn new(
        label: impl Into<String>,
        seed: u64,
        config: serde_json::Value,
        eval: EvalReport,
        bias: Option<BiasReport>,
    ) -> Self {
        RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            label: label.into(),
            seed,
            config,
            eval,
            bias,
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<RunReport> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            crate::error::Error::format(path.display().to_string(), None, e.to_string())
        })
    }

    /// Human-readable table.
    pub fn save_text(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "run: {}   seed: {}", self.label, self.seed)?;
        writeln!(out)?;
        writeln!(out, "{:<24} {:>7} {:>8} {:>8} {:>8}", "scope", "count", "P@1", "P@10", "MRR")?;
        let mut row = |name: &str, m: &Option<Metrics>, count: usize| -> std::io::Result<()> {
            match m {
                Some(m) => writeln!(
                    out,
                    "{:<24} {:>7} {:>8.4} {:>8.4} {:>8.4}",
                    name, m.count, m.p_at_1, m.p_at_10, m.mrr
                ),
                None => writeln!(out, "{:<24} {:>7} {:>8} {:>8} {:>8}", name, count, "-", "-", "-"),
            }
        };
        row("overall", &self.eval.overall, 0)?;
        for (rel, m) in &self.eval.per_relation {
            row(&format!("relation {rel}"), &Some(m.clone()), m.count)?;
        }
        row("easy", &self.eval.easy, self.eval.easy_count)?;
        row("hard", &self.eval.hard, self.eval.hard_count)?;
        if let Some(bias) = &self.bias {
            writeln!(out)?;
            writeln!(
                out,
                "{:<24} {:>7} {:>10} {:>14} {:>14}",
                "bias (per relation)", "count", "RWF", "log10(f) top1", "majority pct"
            )?;
            for (rel, b) in &bias.per_relation {
                writeln!(
                    out,
                    "{:<24} {:>7} {:>10.4} {:>14.4} {:>14.4}",
                    rel, b.count, b.rwf, b.mean_log10_freq_top1, b.majority_label_pct
                )?;
            }
        }
        Ok(())
    }
}

/// A labeled multi-run comparison (lambda sweeps, K sweeps, baselines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub rows: Vec<RunReport>,
}

impl ComparisonReport {
    pub fn new(rows: Vec<RunReport>) -> Self {
        ComparisonReport {
            schema_version: REPORT_SCHEMA_VERSION,
            rows,
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<ComparisonReport> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            crate::error::Error::format(path.display().to_string(), None, e.to_string())
        })
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{:<28} {:>7} {:>8} {:>8} {:>8}", "run", "count", "P@1", "P@10", "MRR")?;
        for r in &self.rows {
            match &r.eval.overall {
                Some(m) => writeln!(
                    out,
                    "{:<28} {:>7} {:>8.4} {:>8.4} {:>8.4}",
                    r.label, m.count, m.p_at_1, m.p_at_10, m.mrr
                )?,
                None => writeln!(out, "{:<28} {:>7} {:>8} {:>8} {:>8}", r.label, 0, "-", "-", "-")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn sample_report(label: &str, p1: f64) -> RunReport {
        let metrics = Metrics {
            count: 10,
            p_at_1: p1,
            p_at_10: (p1 + 0.3).min(1.0),
            mrr: p1 + 0.1,
        };
        let mut per_relation = BTreeMap::new();
        per_relation.insert("r0".to_string(), metrics.clone());
        per_relation.insert("r1".to_string(), metrics.clone());
        RunReport::new(
            label,
            7,
            serde_json::json!({"lambda": 0.8, "k": 15}),
            EvalReport {
                overall: Some(metrics),
                per_relation,
                easy: None,
                hard: None,
                easy_count: 0,
                hard_count: 0,
            },
            None,
        )
    }

    #[test]
    fn json_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let report = sample_report("spe", 0.123456789012345);
        report.save_json(&path).unwrap();
        let loaded = RunReport::load_json(&path).unwrap();
        assert_eq!(loaded, report);
    }

    #[test]
    fn text_table_has_one_row_per_relation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.txt");
        sample_report("spe", 0.5).save_text(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("relation r").count(), 2);
    }

    #[test]
    fn comparison_contains_both_rows() {
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("cmp.json");
        let txt = dir.path().join("cmp.txt");
        let cmp = ComparisonReport::new(vec![
            sample_report("lambda=0", 0.4),
            sample_report("lambda=0.8", 0.5),
        ]);
        cmp.save_json(&json).unwrap();
        cmp.save_text(&txt).unwrap();
        let loaded = ComparisonReport::load_json(&json).unwrap();
        assert_eq!(loaded.rows.len(), 2);
        let text = std::fs::read_to_string(&txt).unwrap();
        assert!(text.contains("lambda=0") && text.contains("lambda=0.8"));
    }

    #[test]
    fn identical_reports_write_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        sample_report("x", 0.25).save_json(&a).unwrap();
        sample_report("x", 0.25).save_json(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
