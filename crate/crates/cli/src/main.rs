//! Experiment driver: corpus generation, backbone pretraining, probe
//! training, evaluation, ablation sweeps, and bias analysis.
//!
//! Exit codes: 0 success; 2 configuration/usage errors; 3 I/O and file
//! format errors; 4 numeric failures; 1 anything else.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use config::{Precision, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "symprobe",
    about = "Desk-scale factual probing of a tiny masked LM with symmetric continuous prompts",
    version
)]
struct Cli {
    /// Run configuration (TOML). Falls back to a built-in demo experiment.
    #[arg(long, global = true, env = "SYMPROBE_CONFIG")]
    config: Option<PathBuf>,

    /// Experiment directory for inputs and outputs.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Random seed; fully determines every output.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Floating-point precision for model math.
    #[arg(long, global = true, value_enum)]
    precision: Option<Precision>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, clap::Args)]
struct SpeFlags {
    /// Weight of the symmetric term (training and inference).
    #[arg(long)]
    lambda: Option<f64>,

    /// Candidate-pool size K.
    #[arg(long)]
    topk: Option<usize>,

    /// Update the backbone jointly with the prompt encoder.
    #[arg(long)]
    finetune_backbone: bool,

    /// Comma-separated answer-vocabulary tokens (default: full vocabulary).
    #[arg(long, value_delimiter = ',')]
    answer_vocab: Option<Vec<String>>,

    /// Probe learning rate.
    #[arg(long)]
    lr: Option<f64>,

    /// Early-stopping patience in epochs.
    #[arg(long)]
    patience: Option<usize>,

    /// Maximum training epochs.
    #[arg(long)]
    max_epochs: Option<usize>,

    /// Training batch size.
    #[arg(long)]
    batch_size: Option<usize>,
}

impl SpeFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(l) = self.lambda {
            cfg.spe.lambda = l;
        }
        if let Some(k) = self.topk {
            cfg.spe.k = k;
        }
        if self.finetune_backbone {
            cfg.spe.finetune_backbone = true;
        }
        if let Some(av) = &self.answer_vocab {
            cfg.spe.answer_vocab = Some(av.clone());
        }
        if let Some(lr) = self.lr {
            cfg.spe.lr = lr;
        }
        if let Some(p) = self.patience {
            cfg.spe.patience = p;
        }
        if let Some(m) = self.max_epochs {
            cfg.spe.max_epochs = m;
        }
        if let Some(b) = self.batch_size {
            cfg.spe.batch_size = b;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic fact dataset, text corpus, and frequency table.
    GenCorpus,

    /// Pretrain the masked-LM backbone on the rendered corpus.
    TrainMlm {
        /// Pretraining epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Pretraining learning rate.
        #[arg(long)]
        mlm_lr: Option<f64>,
    },

    /// Train the prompt encoder with the joint symmetric objective.
    TrainProbe {
        #[command(flatten)]
        spe: SpeFlags,
        /// Checkpoint/report label (default: "spe", or "baseline" at lambda 0).
        #[arg(long)]
        label: Option<String>,
    },

    /// Evaluate a trained probe on the test split and emit reports.
    Eval {
        #[command(flatten)]
        spe: SpeFlags,
        #[arg(long)]
        label: Option<String>,
        /// Comma-separated candidate-pool sizes for a K-sweep table.
        #[arg(long, value_delimiter = ',')]
        sweep_k: Option<Vec<usize>>,
        /// Comma-separated lambda values for an inference-lambda sweep table.
        #[arg(long, value_delimiter = ',')]
        sweep_lambda: Option<Vec<f64>>,
    },

    /// Train and evaluate across lambda values and seeds; emit a comparison.
    Sweep {
        #[command(flatten)]
        spe: SpeFlags,
        /// Lambda values to train with.
        #[arg(long, value_delimiter = ',', default_value = "0,0.8")]
        lambdas: Vec<f64>,
        /// Seeds to repeat each setting with.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },

    /// Bias analysis over existing prediction dumps.
    Analyze {
        /// Dump labels to analyze.
        #[arg(long, value_delimiter = ',', default_value = "spe")]
        labels: Vec<String>,
        /// Top-M cutoff for rank-weighted frequency.
        #[arg(long)]
        rwf_m: Option<usize>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(p) = cli.precision {
        cfg.precision = p;
    }

    macro_rules! with_precision {
        ($f:ident ( cfg $(, $arg:expr)* )) => {
            match cfg.precision {
                Precision::F32 => commands::$f::<f32>(&cfg $(, $arg)*),
                Precision::F64 => commands::$f::<f64>(&cfg $(, $arg)*),
            }
        };
    }

    match cli.command {
        Command::GenCorpus => commands::cmd_gen_corpus(&cfg),
        Command::TrainMlm { epochs, mlm_lr } => {
            if let Some(e) = epochs {
                cfg.mlm_train.epochs = e;
            }
            if let Some(lr) = mlm_lr {
                cfg.mlm_train.lr = lr;
            }
            cfg.mlm_train.validate()?;
            with_precision!(cmd_train_mlm(cfg))
        }
        Command::TrainProbe { spe, label } => {
            spe.apply(&mut cfg);
            with_precision!(cmd_train_probe(cfg, label.as_deref()))
        }
        Command::Eval {
            spe,
            label,
            sweep_k,
            sweep_lambda,
        } => {
            spe.apply(&mut cfg);
            let sk = sweep_k.unwrap_or_default();
            let sl = sweep_lambda.unwrap_or_default();
            with_precision!(cmd_eval(cfg, label.as_deref(), &sk, &sl))
        }
        Command::Sweep { spe, lambdas, seeds } => {
            spe.apply(&mut cfg);
            with_precision!(cmd_sweep(cfg, &lambdas, &seeds))
        }
        Command::Analyze { labels, rwf_m } => {
            let m = rwf_m.unwrap_or(cfg.eval.rwf_m);
            commands::cmd_analyze(&cfg, &labels, m)
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<symprobe_core::Error>() {
        Some(symprobe_core::Error::Config(_)) => 2,
        Some(symprobe_core::Error::Io(_)) | Some(symprobe_core::Error::Format { .. }) => 3,
        Some(symprobe_core::Error::Numeric(_)) => 4,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
