//! Command implementations. Numeric commands are generic over the scalar
//! type and monomorphized by the precision dispatch in `main`.

use crate::config::{Paths, RunConfig};
use anyhow::Context;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use symprobe_core::checkpoint;
use symprobe_core::corpus::{gen_kb, render_corpus, word_freq, FactDataset, FreqTable, TextCorpus};
use symprobe_core::error::Error;
use symprobe_core::eval::{rwf_tokens, BiasReport, ComparisonReport, EvalReport, Metrics, RunReport, FREQ_FLOOR};
use symprobe_core::mlm::{train_mlm, Mlm, Vocab};
use symprobe_core::prompt::{PromptEncoder, Template};
use symprobe_core::scalar::Scalar;
use symprobe_core::spe::{
    evaluate_split, train_with_hook, triple_query, write_predictions, EpochLog, Prediction,
    SpeConfig,
};

fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(Error::Io)?;
    Ok(())
}

fn load_dataset(paths: &Paths) -> anyhow::Result<FactDataset> {
    let text = std::fs::read_to_string(paths.dataset())
        .map_err(Error::Io)
        .with_context(|| format!("reading {}", paths.dataset().display()))?;
    let ds: FactDataset = serde_json::from_str(&text).map_err(|e| {
        Error::format(paths.dataset().display().to_string(), None, e.to_string())
    })?;
    ds.validate()?;
    Ok(ds)
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    seed: u64,
    corpus_config_sha256: String,
    counts: BTreeMap<&'a str, u64>,
    files: Vec<String>,
}

pub fn cmd_gen_corpus(cfg: &RunConfig) -> anyhow::Result<()> {
    let paths = Paths::new(&cfg.out_dir);
    std::fs::create_dir_all(&paths.out_dir).map_err(Error::Io)?;

    let dataset = gen_kb(&cfg.corpus, cfg.seed)?;
    let corpus = render_corpus(&dataset, &cfg.corpus, cfg.seed)?;
    let freq = word_freq(&corpus);

    write_json_pretty(&paths.dataset(), &dataset)?;
    symprobe_core::corpus::write_lama_jsonl(&dataset, &paths.facts())?;
    corpus.save_text(&paths.corpus_text())?;
    corpus.save_spans(&paths.corpus_spans())?;
    freq.save(&paths.freq())?;

    let mut counts = BTreeMap::new();
    counts.insert("entities", dataset.entities.len() as u64);
    counts.insert("relations", dataset.relations.len() as u64);
    counts.insert("triples", dataset.triples.len() as u64);
    counts.insert("train", dataset.splits.train.len() as u64);
    counts.insert("dev", dataset.splits.dev.len() as u64);
    counts.insert("test", dataset.splits.test.len() as u64);
    counts.insert("sentences", corpus.sentences.len() as u64);
    counts.insert("tokens", corpus.token_count() as u64);
    let manifest = Manifest {
        schema_version: crate::config::RUN_SCHEMA_VERSION,
        seed: cfg.seed,
        corpus_config_sha256: cfg.corpus_config_sha256(),
        counts,
        files: vec![
            "dataset.json".into(),
            "facts.jsonl".into(),
            "corpus.txt".into(),
            "corpus.spans.jsonl".into(),
            "freq.txt".into(),
        ],
    };
    write_json_pretty(&paths.manifest(), &manifest)?;

    println!(
        "generated {} triples over {} relations ({} train / {} dev / {} test), {} sentences",
        dataset.triples.len(),
        dataset.relations.len(),
        dataset.splits.train.len(),
        dataset.splits.dev.len(),
        dataset.splits.test.len(),
        corpus.sentences.len()
    );
    println!("wrote {}", paths.manifest().display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct MlmTrainLog {
    seed: u64,
    final_loss: f64,
    epoch_losses: Vec<f64>,
}

pub fn cmd_train_mlm<S: Scalar>(cfg: &RunConfig) -> anyhow::Result<()> {
    let paths = Paths::new(&cfg.out_dir);
    if !paths.corpus_text().exists() {
        return Err(Error::config(format!(
            "missing corpus {} (run gen-corpus first)",
            paths.corpus_text().display()
        ))
        .into());
    }
    let corpus = TextCorpus::load(&paths.corpus_text(), Some(&paths.corpus_spans()))?;
    let vocab = Vocab::from_corpus(&corpus);
    println!(
        "pretraining backbone: {} sentences, vocab {}, dim {}",
        corpus.sentences.len(),
        vocab.len(),
        cfg.mlm.dim
    );
    let out = train_mlm::<S>(&corpus, &vocab, &cfg.mlm, &cfg.mlm_train, cfg.seed)?;
    checkpoint::save_mlm(&paths.mlm_ckpt(), &out.mlm)?;
    write_json_pretty(
        &paths.mlm_train_log(),
        &MlmTrainLog {
            seed: cfg.seed,
            final_loss: out.final_loss,
            epoch_losses: out.epoch_losses,
        },
    )?;
    println!(
        "final masked-token loss {:.4}; wrote {}",
        out.final_loss,
        paths.mlm_ckpt().display()
    );
    Ok(())
}

pub fn default_label(lambda: f64) -> &'static str {
    if lambda == 0.0 {
        "baseline"
    } else {
        "spe"
    }
}

#[derive(Serialize, Deserialize)]
struct ProbeTrainLog {
    label: String,
    seed: u64,
    lambda: f64,
    k: usize,
    finetune_backbone: bool,
    best_epoch: usize,
    best_dev_p1: f64,
    epochs: Vec<EpochLog>,
}

fn build_encoder<S: Scalar>(
    dataset: &FactDataset,
    dim: usize,
    seed: u64,
) -> anyhow::Result<PromptEncoder<S>> {
    let relation_ids: Vec<String> = dataset.relations.iter().map(|r| r.id.clone()).collect();
    Ok(PromptEncoder::new(Template::default(), dim, relation_ids, seed)?)
}

pub fn cmd_train_probe<S: Scalar>(cfg: &RunConfig, label: Option<&str>) -> anyhow::Result<()> {
    let paths = Paths::new(&cfg.out_dir);
    if !paths.mlm_ckpt().exists() {
        return Err(Error::config(format!(
            "missing backbone checkpoint {} (run train-mlm first)",
            paths.mlm_ckpt().display()
        ))
        .into());
    }
    let dataset = load_dataset(&paths)?;
    let mlm: Mlm<S> = checkpoint::load_mlm(&paths.mlm_ckpt())?;
    let spe_cfg = cfg.spe.to_core(&mlm.vocab)?;
    let label = label.unwrap_or_else(|| default_label(spe_cfg.lambda)).to_string();
    let encoder = build_encoder::<S>(&dataset, mlm.config.dim, cfg.seed)?;

    println!(
        "probe training [{label}]: lambda {}, K {}, lr {}, batch {}, max {} epochs, patience {}",
        spe_cfg.lambda, spe_cfg.k, spe_cfg.lr, spe_cfg.batch_size, spe_cfg.max_epochs, spe_cfg.patience
    );

    let probe_path = paths.probe_ckpt(&label);
    let tuned_path = paths.finetuned_mlm_ckpt(&label);
    let mut hook = |enc: &PromptEncoder<S>, mlm_tuned: Option<&Mlm<S>>, log: &EpochLog| {
        checkpoint::save_prompt_encoder(&probe_path, enc)?;
        if let Some(m) = mlm_tuned {
            checkpoint::save_mlm(&tuned_path, m)?;
        }
        println!("  epoch {:>3}: dev P@1 {:.4} (checkpointed)", log.epoch, log.dev_p1);
        Ok(())
    };
    let out = train_with_hook(&dataset, &mlm, &encoder, &spe_cfg, cfg.seed, Some(&mut hook))?;

    checkpoint::save_prompt_encoder(&probe_path, &out.encoder)?;
    if let Some(m) = &out.mlm {
        checkpoint::save_mlm(&tuned_path, m)?;
    }
    write_json_pretty(
        &paths.train_log(&label),
        &ProbeTrainLog {
            label: label.clone(),
            seed: cfg.seed,
            lambda: spe_cfg.lambda,
            k: spe_cfg.k,
            finetune_backbone: spe_cfg.finetune_backbone,
            best_epoch: out.best_epoch,
            best_dev_p1: out.best_dev_p1,
            epochs: out.log,
        },
    )?;
    println!(
        "best dev P@1 {:.4} at epoch {}; wrote {}",
        out.best_dev_p1,
        out.best_epoch,
        probe_path.display()
    );
    Ok(())
}

fn config_echo(cfg: &RunConfig, spe: &SpeConfig, label: &str) -> serde_json::Value {
    serde_json::json!({
        "label": label,
        "seed": cfg.seed,
        "lambda": spe.lambda,
        "k": spe.k,
        "finetune_backbone": spe.finetune_backbone,
        "answer_vocab_size": spe.answer_vocab.as_ref().map(|v| v.len()),
        "mlm": cfg.mlm,
    })
}

/// Shared evaluation path: test-split predictions at a base pool size large
/// enough to derive every sweep variant without rescoring.
struct EvalRun<S> {
    dataset: FactDataset,
    mlm: Mlm<S>,
    golds: Vec<usize>,
    base: Vec<Prediction<S>>,
    spe_cfg: SpeConfig,
}

fn run_eval<S: Scalar>(
    cfg: &RunConfig,
    label: &str,
    sweep_k: &[usize],
    sweep_lambda: &[f64],
) -> anyhow::Result<EvalRun<S>> {
    let paths = Paths::new(&cfg.out_dir);
    let probe_path = paths.probe_ckpt(label);
    if !probe_path.exists() {
        return Err(Error::config(format!(
            "missing probe checkpoint {} (run train-probe first)",
            probe_path.display()
        ))
        .into());
    }
    let dataset = load_dataset(&paths)?;
    let tuned = paths.finetuned_mlm_ckpt(label);
    let mlm: Mlm<S> = if tuned.exists() {
        checkpoint::load_mlm(&tuned)?
    } else {
        checkpoint::load_mlm(&paths.mlm_ckpt())?
    };
    let encoder: PromptEncoder<S> = checkpoint::load_prompt_encoder(&probe_path)?;
    let spe_cfg = cfg.spe.to_core(&mlm.vocab)?;

    // One pass at the largest pool; smaller pools and other lambdas are
    // derived from the stored scores.
    let k_base = sweep_k.iter().copied().chain([spe_cfg.k]).max().unwrap();
    let needs_sym = spe_cfg.lambda != 0.0 || sweep_lambda.iter().any(|&l| l != 0.0);
    let lambda_base = if spe_cfg.lambda != 0.0 {
        spe_cfg.lambda
    } else if needs_sym {
        1.0
    } else {
        0.0
    };
    let base_cfg = SpeConfig {
        k: k_base,
        lambda: lambda_base,
        ..spe_cfg.clone()
    };
    let base = evaluate_split(&mlm, &encoder, &dataset, &dataset.splits.test, &base_cfg)?;
    let golds: Vec<usize> = dataset
        .splits
        .test
        .iter()
        .map(|&i| triple_query(&mlm, &dataset, i).1)
        .collect();
    Ok(EvalRun {
        dataset,
        mlm,
        golds,
        base,
        spe_cfg,
    })
}

fn derived_report<S: Scalar>(
    run: &EvalRun<S>,
    cfg: &RunConfig,
    label: &str,
    k: usize,
    lambda: f64,
    freq: &FreqTable,
) -> anyhow::Result<(Vec<Prediction<S>>, RunReport)> {
    let preds: Vec<Prediction<S>> = run
        .base
        .iter()
        .map(|p| p.with_params(k, lambda))
        .collect::<Result<_, _>>()?;
    let eval = EvalReport::build(
        &preds,
        &run.golds,
        &run.dataset,
        &run.dataset.splits.test,
        Some(&run.dataset.easy_mask),
    )?;
    let bias = if preds.is_empty() {
        None
    } else {
        Some(BiasReport::build(
            &preds,
            &run.dataset,
            &run.mlm.vocab,
            freq,
            cfg.eval.rwf_m,
        )?)
    };
    let spe_cfg = SpeConfig {
        k,
        lambda,
        ..run.spe_cfg.clone()
    };
    let report = RunReport::new(label, cfg.seed, config_echo(cfg, &spe_cfg, label), eval, bias);
    Ok((preds, report))
}

pub fn cmd_eval<S: Scalar>(
    cfg: &RunConfig,
    label: Option<&str>,
    sweep_k: &[usize],
    sweep_lambda: &[f64],
) -> anyhow::Result<()> {
    let paths = Paths::new(&cfg.out_dir);
    let label = label
        .map(str::to_string)
        .unwrap_or_else(|| default_label(cfg.spe.lambda).to_string());
    let run = run_eval::<S>(cfg, &label, sweep_k, sweep_lambda)?;
    let freq = FreqTable::load(&paths.freq())?;

    let (preds, report) = derived_report(&run, cfg, &label, run.spe_cfg.k, run.spe_cfg.lambda, &freq)?;
    report.save_json(&paths.report_json(&label))?;
    report.save_text(&paths.report_text(&label))?;
    let top_n = cfg.eval.dump_top_n.max(cfg.eval.rwf_m);
    write_predictions(
        &paths.predictions(&label),
        &run.mlm,
        &run.dataset,
        &run.dataset.splits.test,
        &preds,
        top_n,
    )?;
    match &report.eval.overall {
        Some(m) => println!(
            "[{label}] test P@1 {:.4}  P@10 {:.4}  MRR {:.4}  (n={})",
            m.p_at_1, m.p_at_10, m.mrr, m.count
        ),
        None => println!("[{label}] empty test split; empty report written"),
    }

    if !sweep_k.is_empty() {
        let mut rows = Vec::new();
        for &k in sweep_k {
            let (_, r) = derived_report(&run, cfg, &format!("{label} K={k}"), k, run.spe_cfg.lambda, &freq)?;
            rows.push(r);
        }
        let cmp = ComparisonReport::new(rows);
        cmp.save_json(&paths.sweep_k_json(&label))?;
        cmp.save_text(&paths.sweep_k_text(&label))?;
        println!("wrote {}", paths.sweep_k_text(&label).display());
    }
    if !sweep_lambda.is_empty() {
        let mut rows = Vec::new();
        for &l in sweep_lambda {
            let (_, r) = derived_report(&run, cfg, &format!("{label} lambda={l}"), run.spe_cfg.k, l, &freq)?;
            rows.push(r);
        }
        let cmp = ComparisonReport::new(rows);
        cmp.save_json(&paths.sweep_lambda_json(&label))?;
        cmp.save_text(&paths.sweep_lambda_text(&label))?;
        println!("wrote {}", paths.sweep_lambda_text(&label).display());
    }
    println!("wrote {}", paths.report_json(&label).display());
    Ok(())
}

pub fn cmd_sweep<S: Scalar>(cfg: &RunConfig, lambdas: &[f64], seeds: &[u64]) -> anyhow::Result<()> {
    let paths = Paths::new(&cfg.out_dir);
    let dataset = load_dataset(&paths)?;
    let mlm: Mlm<S> = checkpoint::load_mlm(&paths.mlm_ckpt())?;
    let freq = FreqTable::load(&paths.freq())?;
    let golds: Vec<usize> = dataset
        .splits
        .test
        .iter()
        .map(|&i| triple_query(&mlm, &dataset, i).1)
        .collect();

    let mut rows = Vec::new();
    let mut means: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for &lambda in lambdas {
        for &seed in seeds {
            let spe_cfg = SpeConfig {
                lambda,
                ..cfg.spe.to_core(&mlm.vocab)?
            };
            let encoder = build_encoder::<S>(&dataset, mlm.config.dim, seed)?;
            let out = symprobe_core::spe::train(&dataset, &mlm, &encoder, &spe_cfg, seed)?;
            let eval_mlm = out.mlm.as_ref().unwrap_or(&mlm);
            let preds = evaluate_split(eval_mlm, &out.encoder, &dataset, &dataset.splits.test, &spe_cfg)?;
            let eval = EvalReport::build(
                &preds,
                &golds,
                &dataset,
                &dataset.splits.test,
                Some(&dataset.easy_mask),
            )?;
            let bias = BiasReport::build(&preds, &dataset, &eval_mlm.vocab, &freq, cfg.eval.rwf_m).ok();
            let label = format!("lambda={lambda} seed={seed}");
            let p1 = eval.overall.as_ref().map_or(0.0, |m| m.p_at_1);
            println!("[sweep] {label}: dev P@1 {:.4}, test P@1 {:.4}", out.best_dev_p1, p1);
            means.entry(format!("lambda={lambda}")).or_default().push(p1);
            let mut run_cfg = cfg.clone();
            run_cfg.seed = seed;
            rows.push(RunReport::new(
                label.clone(),
                seed,
                config_echo(&run_cfg, &spe_cfg, &label),
                eval,
                bias,
            ));
        }
    }
    let cmp = ComparisonReport::new(rows);
    cmp.save_json(&paths.sweep_comparison_json())?;
    cmp.save_text(&paths.sweep_comparison_text())?;
    // Append per-lambda means to the text table.
    {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(paths.sweep_comparison_text())
            .map_err(Error::Io)?;
        writeln!(f).map_err(Error::Io)?;
        for (label, p1s) in &means {
            let mean = p1s.iter().sum::<f64>() / p1s.len() as f64;
            writeln!(f, "mean test P@1 {label}: {mean:.4} over {} seeds", p1s.len())
                .map_err(Error::Io)?;
        }
    }
    println!("wrote {}", paths.sweep_comparison_text().display());
    Ok(())
}

#[derive(Serialize)]
struct AnalysisRow {
    rwf: f64,
    mean_log10_freq_top1: f64,
    majority_label_pct: f64,
    count: usize,
}

#[derive(Serialize)]
struct LabelAnalysis {
    per_relation: BTreeMap<String, AnalysisRow>,
    easy: Option<Metrics>,
    hard: Option<Metrics>,
}

/// Bias analysis straight from prediction dumps; no model needed.
pub fn cmd_analyze(cfg: &RunConfig, labels: &[String], rwf_m: usize) -> anyhow::Result<()> {
    let paths = Paths::new(&cfg.out_dir);
    let dataset = load_dataset(&paths)?;
    let freq = FreqTable::load(&paths.freq())?;
    let majority = dataset.train_majority_objects();

    let mut out: BTreeMap<String, LabelAnalysis> = BTreeMap::new();
    for label in labels {
        let records = symprobe_core::spe::read_predictions(&paths.predictions(label))?;
        if records.len() != dataset.splits.test.len() {
            return Err(Error::config(format!(
                "{}: {} records but test split has {} triples",
                paths.predictions(label).display(),
                records.len(),
                dataset.splits.test.len()
            ))
            .into());
        }
        let mut per_rel: BTreeMap<String, (f64, f64, usize, usize)> = BTreeMap::new();
        for rec in &records {
            let rel_idx = dataset
                .relation_index(&rec.relation)
                .ok_or_else(|| Error::config(format!("unknown relation {} in dump", rec.relation)))?;
            let tokens: Vec<&str> = rec.candidates.iter().map(|c| c.token.as_str()).collect();
            let r = rwf_tokens(&tokens, &freq, rwf_m.min(tokens.len()).max(1), FREQ_FLOOR)?;
            let top1 = tokens.first().copied().unwrap_or("");
            let majority_hit = majority
                .get(&rel_idx)
                .map(|&obj| dataset.entity(obj).surface_text() == top1)
                .unwrap_or(false);
            let e = per_rel.entry(rec.relation.clone()).or_insert((0.0, 0.0, 0, 0));
            e.0 += r;
            e.1 += freq.log10_rel(top1, FREQ_FLOOR);
            e.2 += majority_hit as usize;
            e.3 += 1;
        }
        let per_relation = per_rel
            .into_iter()
            .map(|(rel, (rwf_sum, top1_sum, maj, n))| {
                (
                    rel,
                    AnalysisRow {
                        rwf: rwf_sum / n as f64,
                        mean_log10_freq_top1: top1_sum / n as f64,
                        majority_label_pct: maj as f64 / n as f64,
                        count: n,
                    },
                )
            })
            .collect();

        let easy_ranks: Vec<Option<usize>> = records
            .iter()
            .zip(&dataset.easy_mask)
            .filter(|(_, &e)| e)
            .map(|(r, _)| r.gold_rank)
            .collect();
        let hard_ranks: Vec<Option<usize>> = records
            .iter()
            .zip(&dataset.easy_mask)
            .filter(|(_, &e)| !e)
            .map(|(r, _)| r.gold_rank)
            .collect();
        out.insert(
            label.clone(),
            LabelAnalysis {
                per_relation,
                easy: Metrics::from_ranks(&easy_ranks),
                hard: Metrics::from_ranks(&hard_ranks),
            },
        );
    }

    write_json_pretty(&paths.analysis_json(), &out)?;
    {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(paths.analysis_text()).map_err(Error::Io)?,
        );
        for (label, a) in &out {
            writeln!(f, "== {label} ==").map_err(Error::Io)?;
            writeln!(
                f,
                "{:<20} {:>7} {:>10} {:>14} {:>14}",
                "relation", "count", "RWF", "log10(f) top1", "majority pct"
            )
            .map_err(Error::Io)?;
            for (rel, row) in &a.per_relation {
                writeln!(
                    f,
                    "{:<20} {:>7} {:>10.4} {:>14.4} {:>14.4}",
                    rel, row.count, row.rwf, row.mean_log10_freq_top1, row.majority_label_pct
                )
                .map_err(Error::Io)?;
            }
            for (name, m) in [("easy", &a.easy), ("hard", &a.hard)] {
                if let Some(m) = m {
                    writeln!(
                        f,
                        "{name}: n={} P@1 {:.4} P@10 {:.4} MRR {:.4}",
                        m.count, m.p_at_1, m.p_at_10, m.mrr
                    )
                    .map_err(Error::Io)?;
                }
            }
            writeln!(f).map_err(Error::Io)?;
        }
    }
    println!("wrote {}", paths.analysis_text().display());
    Ok(())
}
