//! Command-line surface: synthetic generation, preprocessing, training,
//! evaluation, and hyperparameter sweeps.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use dsuda::config::RunConfig;
use dsuda::data::{read_processed_csv, read_raw_csv, write_atomic, write_processed_csv, write_raw_csv};
use dsuda::metrics::{reports_to_csv, roc_to_csv};
use dsuda::model::SignConvention;
use dsuda::pipeline::{resume_training, run_training, sweep, sweep_to_csv, RunArtifacts, SweepAxis};
use dsuda::preprocess::align_dataset;
use dsuda::synth::generate;
use dsuda::trainer::{load_checkpoint, log_to_csv, save_checkpoint, TrainConfig};

#[derive(Parser)]
#[command(name = "dsuda", about = "Disentangled side-aware adversarial domain adaptation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Run configuration file (key=value sections; all keys optional).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct TrainOverrides {
    /// Override the trainer seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Disable adaptation: alpha = beta = 0 and no discriminator updates.
    #[arg(long)]
    no_adaptation: bool,
    /// Override the adversarial sign convention.
    #[arg(long, value_parser = parse_sign)]
    sign_convention: Option<SignConvention>,
}

fn parse_sign(s: &str) -> Result<SignConvention, String> {
    SignConvention::parse(s).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic source/target dataset CSVs.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the generator seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Align a source CSV to the target format and normalize both domains.
    Preprocess {
        #[command(flatten)]
        common: CommonArgs,
        /// Raw source dataset CSV.
        #[arg(long)]
        source: PathBuf,
        /// Raw target dataset CSV.
        #[arg(long)]
        target: PathBuf,
    },
    /// Train on processed CSVs: pre-train, transplant, adversarial stage,
    /// then evaluate on the target set.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Processed source CSV.
        #[arg(long)]
        source: PathBuf,
        /// Processed target CSV.
        #[arg(long)]
        target: PathBuf,
        #[command(flatten)]
        overrides: TrainOverrides,
        /// Resume from a checkpoint: skip pre-training and transplant, run
        /// the configured adversarial epochs on top of the loaded model.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a labeled processed CSV.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled processed CSV.
        #[arg(long)]
        data: PathBuf,
    },
    /// Sweep one hyperparameter axis over a list of values and seeds.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Processed source CSV.
        #[arg(long)]
        source: PathBuf,
        /// Processed target CSV.
        #[arg(long)]
        target: PathBuf,
        /// Axis: steps_dae, steps_suda, lr_dae, lr_suda, alpha, beta, eta.
        #[arg(long)]
        axis: String,
        /// Comma-separated values for the axis.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_path(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn apply_overrides(mut cfg: TrainConfig, overrides: &TrainOverrides) -> TrainConfig {
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(sign) = overrides.sign_convention {
        cfg.weights.sign_convention = sign;
    }
    if overrides.no_adaptation {
        cfg = cfg.without_adaptation();
    }
    cfg
}

fn ensure_out_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    write_atomic(path, |out| {
        out.extend_from_slice(text.as_bytes());
        Ok(())
    })
    .with_context(|| format!("writing {}", path.display()))
}

fn write_run_artifacts(
    out: &Path,
    artifacts: &RunArtifacts,
    cfg: &TrainConfig,
) -> anyhow::Result<()> {
    save_checkpoint(&artifacts.model, cfg, &out.join("checkpoint.dsuda"))?;
    write_text(&out.join("train_log.csv"), &log_to_csv(&artifacts.log))?;
    write_text(&out.join("metrics.csv"), &reports_to_csv(&artifacts.evaluation.reports))?;
    Ok(())
}

fn sweep_threads() -> usize {
    std::env::var("DSUDA_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

fn run() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Generate { common, seed } => {
            let mut cfg = load_config(&common.config)?;
            if let Some(seed) = seed {
                cfg.synth.seed = seed;
            }
            ensure_out_dir(&common.out)?;
            let pair = generate(&cfg.synth)?;
            write_raw_csv(&common.out.join("source.csv"), &pair.source)?;
            write_raw_csv(&common.out.join("target.csv"), &pair.target)?;
            println!(
                "generated {} source trials ({} subjects) and {} target trials ({} subjects)",
                pair.source.len(),
                cfg.synth.source_subjects,
                pair.target.len(),
                cfg.synth.target_subjects,
            );
        }
        Command::Preprocess { common, source, target } => {
            let cfg = load_config(&common.config)?;
            ensure_out_dir(&common.out)?;
            let source_trials = read_raw_csv(&source)?;
            let target_trials = read_raw_csv(&target)?;
            let (ps, pt) = align_dataset(&source_trials, &target_trials, &cfg.preprocess)?;
            let degenerate = ps.iter().chain(pt.iter()).filter(|t| t.degenerate).count();
            write_processed_csv(&common.out.join("processed_source.csv"), &ps)?;
            write_processed_csv(&common.out.join("processed_target.csv"), &pt)?;
            println!(
                "processed {} source segments from {} trials, {} target trials, {} degenerate",
                ps.len(),
                source_trials.len(),
                pt.len(),
                degenerate
            );
        }
        Command::Train { common, source, target, overrides, resume } => {
            let cfg = load_config(&common.config)?;
            let train_cfg = apply_overrides(cfg.train_config(), &overrides);
            train_cfg.validate()?;
            ensure_out_dir(&common.out)?;
            let source_set = read_processed_csv(&source)?;
            let target_set = read_processed_csv(&target)?;
            let artifacts = match resume {
                Some(ckpt) => {
                    let (model, _) = load_checkpoint(&ckpt)?;
                    resume_training(model, &source_set, &target_set, &train_cfg)?
                }
                None => run_training(&source_set, &target_set, cfg.model_shape(), &train_cfg)?,
            };
            write_run_artifacts(&common.out, &artifacts, &train_cfg)?;
            let acc = artifacts.evaluation.reports[0]
                .acc
                .map_or("n/a".to_string(), |a| format!("{a:.4}"));
            println!("trained; target accuracy (both ears) = {acc}");
        }
        Command::Eval { common, checkpoint, data } => {
            ensure_out_dir(&common.out)?;
            let (model, _) = load_checkpoint(&checkpoint)?;
            let trials = read_processed_csv(&data)?;
            let evaluation = dsuda::trainer::evaluate(&model, &trials)?;
            write_text(&common.out.join("metrics.csv"), &reports_to_csv(&evaluation.reports))?;
            write_text(&common.out.join("roc.csv"), &roc_to_csv(&evaluation.roc))?;
            let acc = evaluation.reports[0].acc.map_or("n/a".to_string(), |a| format!("{a:.4}"));
            println!("evaluated {} trials; accuracy (both ears) = {acc}", trials.len());
        }
        Command::Sweep { common, source, target, axis, values, seeds, overrides } => {
            let cfg = load_config(&common.config)?;
            let base = apply_overrides(cfg.train_config(), &overrides);
            base.validate()?;
            if values.is_empty() {
                bail!("--values needs at least one entry");
            }
            if seeds.is_empty() {
                bail!("--seeds needs at least one entry");
            }
            ensure_out_dir(&common.out)?;
            let axis = SweepAxis::parse(&axis)?;
            let source_set = read_processed_csv(&source)?;
            let target_set = read_processed_csv(&target)?;
            let table = sweep(
                &source_set,
                &target_set,
                cfg.model_shape(),
                &base,
                axis,
                &values,
                &seeds,
                sweep_threads(),
            )?;
            // Each cell owns its own subdirectory of artifacts.
            for (value, seed, outcome) in &table.cells {
                let cell_dir = common.out.join(format!("cell_{}={value}_seed={seed}", axis.name()));
                ensure_out_dir(&cell_dir)?;
                match outcome {
                    dsuda::pipeline::CellOutcome::Ok(artifacts) => {
                        let mut cell_cfg = base;
                        cell_cfg.seed = *seed;
                        axis.apply(&mut cell_cfg, *value)?;
                        write_run_artifacts(&cell_dir, artifacts, &cell_cfg)?;
                    }
                    dsuda::pipeline::CellOutcome::Failed(msg) => {
                        write_text(&cell_dir.join("failed.txt"), msg)?;
                    }
                }
            }
            write_text(&common.out.join("sweep.csv"), &sweep_to_csv(&table))?;
            let failed: usize = table.rows.iter().map(|r| r.seeds_failed).sum();
            println!(
                "swept {} over {} values x {} seeds; {failed} failed cells",
                axis.name(),
                values.len(),
                seeds.len()
            );
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
