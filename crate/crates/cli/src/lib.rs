//! Command-line driver: JSON experiment configs in, run directories with
//! checkpoints, metric streams and reports out.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

pub use config::{DatasetConfig, ExperimentConfig, Precision};
pub use error::{CliError, CliResult};

use commands::PreviewSpec;

#[derive(Debug, Parser)]
#[command(name = "sassl", version, about = "Subject-aware contrastive pretraining for biosignals")]
pub struct Cli {
    /// Experiment config (JSON). Missing fields take desk-scale defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub precision: Option<Precision>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes a synthetic dataset and prints its hash.
    GenSynthetic {
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        recs_per_subject: Option<usize>,
        #[arg(long)]
        channels: Option<usize>,
    },
    /// Contrastive pretraining; writes checkpoint.bin and metrics.jsonl.
    Pretrain,
    /// Linear probe on a frozen encoder (random init without --checkpoint).
    Probe {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Probe, then end-to-end fine-tuning; writes report_pre.json and report.json.
    Finetune {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Scores a probe or fine-tune checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// One CSV per augmentation applied to a single window.
    AugmentPreview {
        #[arg(long, default_value_t = 0)]
        recording: usize,
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Samples; defaults to the model window.
        #[arg(long)]
        length: Option<usize>,
    },
}

/// Config file plus command-line overrides, validated.
pub fn resolve_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = cli.precision {
        cfg.precision = p;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

/// Runs one command and returns the JSON summary for stdout.
pub fn run(cli: &Cli) -> CliResult<Value> {
    let cfg = resolve_config(cli)?;
    let out = cfg.out.clone().ok_or_else(|| CliError::Usage("no output directory: pass --out or set `out`".into()))?;
    std::fs::create_dir_all(&out)?;
    if let Command::GenSynthetic { subjects, classes, recs_per_subject, channels } = &cli.command {
        let mut p = match &cfg.dataset {
            DatasetConfig::Synthetic(p) => p.clone(),
            DatasetConfig::Manifest { .. } => Default::default(),
        };
        p.n_subjects = subjects.unwrap_or(p.n_subjects);
        p.n_classes = classes.unwrap_or(p.n_classes);
        p.recs_per_subject = recs_per_subject.unwrap_or(p.recs_per_subject);
        p.channels = channels.unwrap_or(p.channels);
        if let Some(s) = cli.seed {
            p.seed = s;
        }
        let (manifest, hash) = commands::gen_synthetic(&p, &out)?;
        return Ok(json!({ "manifest": manifest, "dataset_hash": hash }));
    }
    cfg.validate()?;
    macro_rules! at_precision {
        ($f:ident($($arg:expr),*)) => {
            match cfg.precision {
                Precision::F32 => serde_json::to_value(commands::$f::<f32>(cfg.clone(), &out $(, $arg)*)?)?,
                Precision::F64 => serde_json::to_value(commands::$f::<f64>(cfg.clone(), &out $(, $arg)*)?)?,
            }
        };
    }
    Ok(match &cli.command {
        Command::GenSynthetic { .. } => unreachable!("handled above"),
        Command::Pretrain => at_precision!(pretrain()),
        Command::Probe { checkpoint } => at_precision!(probe(checkpoint.as_deref())),
        Command::Finetune { checkpoint } => at_precision!(finetune_cmd(checkpoint.as_deref())),
        Command::Eval { checkpoint } => at_precision!(eval(checkpoint)),
        Command::AugmentPreview { recording, start, length } => {
            at_precision!(augment_preview(PreviewSpec { recording: *recording, start: *start, length: *length }))
        }
    })
}
