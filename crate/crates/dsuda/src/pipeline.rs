//! End-to-end orchestration shared by the CLI and the test suites: full
//! training runs, checkpoint evaluation, and hyperparameter sweeps.

use std::fmt::Write as _;

use crate::data::ProcessedTrial;
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, Slice, METRIC_NAMES};
use crate::model::{DsudaModel, ModelShape};
use crate::trainer::{
    adversarial_train, evaluate, init_model, pretrain, transplant, Evaluation, TrainConfig,
    TrainLogRecord,
};

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub model: DsudaModel,
    pub log: Vec<TrainLogRecord>,
    pub evaluation: Evaluation,
}

/// Full run: seeded init, pre-training, parameter transplant, adversarial
/// training, and transductive evaluation on the target set.
pub fn run_training(
    source: &[ProcessedTrial],
    target: &[ProcessedTrial],
    shape: ModelShape,
    cfg: &TrainConfig,
) -> Result<RunArtifacts> {
    let mut model = init_model(shape, cfg)?;
    let mut log = pretrain(&mut model, source, cfg)?;
    transplant(&mut model)?;
    log.extend(adversarial_train(&mut model, source, target, cfg)?);
    let evaluation = evaluate(&model, target)?;
    Ok(RunArtifacts { model, log, evaluation })
}

/// Continue from a loaded model: no pre-training, no transplant, just
/// `cfg.adversarial_epochs` more adversarial epochs and a fresh evaluation.
pub fn resume_training(
    mut model: DsudaModel,
    source: &[ProcessedTrial],
    target: &[ProcessedTrial],
    cfg: &TrainConfig,
) -> Result<RunArtifacts> {
    let log = if cfg.adversarial_epochs > 0 {
        adversarial_train(&mut model, source, target, cfg)?
    } else {
        Vec::new()
    };
    let evaluation = evaluate(&model, target)?;
    Ok(RunArtifacts { model, log, evaluation })
}

/// Hyperparameter axes, one per study table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    StepsDae,
    StepsSuda,
    LrDae,
    LrSuda,
    Alpha,
    Beta,
    Eta,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::StepsDae => "steps_dae",
            SweepAxis::StepsSuda => "steps_suda",
            SweepAxis::LrDae => "lr_dae",
            SweepAxis::LrSuda => "lr_suda",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Beta => "beta",
            SweepAxis::Eta => "eta",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [
            SweepAxis::StepsDae,
            SweepAxis::StepsSuda,
            SweepAxis::LrDae,
            SweepAxis::LrSuda,
            SweepAxis::Alpha,
            SweepAxis::Beta,
            SweepAxis::Eta,
        ]
        .into_iter()
        .find(|a| a.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown sweep axis `{s}`")))
    }

    /// Apply one swept value to a config.
    pub fn apply(self, cfg: &mut TrainConfig, value: f64) -> Result<()> {
        let as_steps = |v: f64| -> Result<usize> {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::Config(format!(
                    "{} takes non-negative integers, got {v}",
                    self.name()
                )));
            }
            Ok(v as usize)
        };
        match self {
            SweepAxis::StepsDae => cfg.steps_dae = as_steps(value)?,
            SweepAxis::StepsSuda => cfg.steps_suda = as_steps(value)?,
            SweepAxis::LrDae => cfg.lr_dae = value,
            SweepAxis::LrSuda => cfg.lr_suda = value,
            SweepAxis::Alpha => cfg.weights.alpha = value,
            SweepAxis::Beta => cfg.weights.beta = value,
            SweepAxis::Eta => cfg.weights.eta = value,
        }
        cfg.validate()
    }
}

/// Result of one sweep cell (one value, one seed).
#[derive(Debug, Clone)]
pub enum CellOutcome {
    Ok(Box<RunArtifacts>),
    Failed(String),
}

/// Aggregated sweep results for one swept value.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    /// Per slice (both/left/right), per metric: mean and population std over
    /// the seeds where the metric was defined.
    pub stats: [[Option<(f64, f64)>; 7]; 3],
}

/// The full sweep result.
#[derive(Debug, Clone)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    /// Raw per-cell outcomes in (value, seed) order.
    pub cells: Vec<(f64, u64, CellOutcome)>,
}

fn aggregate(value: f64, evaluations: &[&Evaluation], failed: usize) -> SweepRow {
    let mut stats = [[None; 7]; 3];
    for (si, _) in [Slice::Both, Slice::Left, Slice::Right].iter().enumerate() {
        for mi in 0..7 {
            let samples: Vec<f64> = evaluations
                .iter()
                .filter_map(|e| e.reports[si].values()[mi])
                .collect();
            if samples.is_empty() {
                continue;
            }
            let n = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / n;
            let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            stats[si][mi] = Some((mean, var.sqrt()));
        }
    }
    SweepRow { value, seeds_ok: evaluations.len(), seeds_failed: failed, stats }
}

/// Run every (value, seed) cell. Cells are independent; up to
/// `threads` of them run concurrently.
pub fn sweep(
    source: &[ProcessedTrial],
    target: &[ProcessedTrial],
    shape: ModelShape,
    base: &TrainConfig,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    threads: usize,
) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let mut jobs: Vec<(f64, u64)> = Vec::new();
    for &value in values {
        for &seed in seeds {
            jobs.push((value, seed));
        }
    }

    let run_cell = |value: f64, seed: u64| -> CellOutcome {
        let mut cfg = *base;
        cfg.seed = seed;
        if let Err(e) = axis.apply(&mut cfg, value) {
            return CellOutcome::Failed(e.to_string());
        }
        match run_training(source, target, shape, &cfg) {
            Ok(artifacts) => CellOutcome::Ok(Box::new(artifacts)),
            Err(e) => CellOutcome::Failed(e.to_string()),
        }
    };

    let threads = threads.max(1);
    let mut cells: Vec<(f64, u64, CellOutcome)> = Vec::with_capacity(jobs.len());
    if threads == 1 {
        for &(value, seed) in &jobs {
            cells.push((value, seed, run_cell(value, seed)));
        }
    } else {
        for chunk in jobs.chunks(threads) {
            let outcomes: Vec<CellOutcome> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&(value, seed)| scope.spawn(move || run_cell(value, seed)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("sweep cell panicked")).collect()
            });
            for (&(value, seed), outcome) in chunk.iter().zip(outcomes) {
                cells.push((value, seed, outcome));
            }
        }
    }

    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let ok: Vec<&Evaluation> = cells
            .iter()
            .filter(|(v, _, o)| *v == value && matches!(o, CellOutcome::Ok(_)))
            .map(|(_, _, o)| match o {
                CellOutcome::Ok(a) => &a.evaluation,
                CellOutcome::Failed(_) => unreachable!(),
            })
            .collect();
        let failed = cells
            .iter()
            .filter(|(v, _, o)| *v == value && matches!(o, CellOutcome::Failed(_)))
            .count();
        rows.push(aggregate(value, &ok, failed));
    }
    Ok(SweepTable { axis, rows, cells })
}

/// Render the sweep table CSV: one row per (value, slice) with mean/std per
/// metric and the per-value seed failure count.
pub fn sweep_to_csv(table: &SweepTable) -> String {
    let mut out = String::from("axis,value,slice,seeds_ok,seeds_failed");
    for name in METRIC_NAMES {
        let _ = write!(out, ",{name}_mean,{name}_std");
    }
    out.push('\n');
    for row in &table.rows {
        for (si, slice) in [Slice::Both, Slice::Left, Slice::Right].iter().enumerate() {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                table.axis.name(),
                row.value,
                slice.name(),
                row.seeds_ok,
                row.seeds_failed
            );
            for mi in 0..7 {
                match row.stats[si][mi] {
                    Some((mean, std)) => {
                        let _ = write!(out, ",{mean:.6},{std:.6}");
                    }
                    None => out.push_str(",n/a,n/a"),
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Mean target accuracy (both-ears slice) over a set of artifacts.
pub fn mean_accuracy(evals: &[Evaluation]) -> Option<f64> {
    let samples: Vec<f64> = evals.iter().filter_map(|e| e.reports[0].acc).collect();
    if samples.is_empty() {
        None
    } else {
        Some(samples.iter().sum::<f64>() / samples.len() as f64)
    }
}

/// Reports of one evaluation keyed for CSV export, in both/left/right order.
pub fn evaluation_reports(evaluation: &Evaluation) -> &[MetricsReport; 3] {
    &evaluation.reports
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClassLabel, Domain, Side};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_sets(n: usize) -> (Vec<ProcessedTrial>, Vec<ProcessedTrial>) {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut make = |domain: Domain, i: usize, label: u8| ProcessedTrial {
            subject_id: format!("{}{i:02}", domain.name()),
            domain,
            side: if i % 2 == 0 { Side::Left } else { Side::Right },
            label: Some(ClassLabel::from_bit(label).unwrap()),
            duration_ms: 8.0,
            segment_index: 0,
            origin: i,
            degenerate: false,
            samples: (0..n)
                .map(|_| (rng.gen_range(0.0..0.5) + label as f64 * 0.4).clamp(0.0, 1.0))
                .collect(),
        };
        let source: Vec<_> = (0..20).map(|i| make(Domain::Source, i, (i % 2) as u8)).collect();
        let target: Vec<_> = (0..12).map(|i| make(Domain::Target, i, ((i / 2) % 2) as u8)).collect();
        (source, target)
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            pretrain_epochs: 2,
            adversarial_epochs: 2,
            steps_dae: 1,
            steps_suda: 1,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    fn tiny_shape(n: usize) -> ModelShape {
        ModelShape { input_len: n, hidden: 6, latent: 4, decoder_hidden: 5, head_hidden: 3 }
    }

    #[test]
    fn run_training_produces_reports_and_log() {
        let (source, target) = toy_sets(8);
        let artifacts = run_training(&source, &target, tiny_shape(8), &tiny_cfg()).unwrap();
        assert_eq!(artifacts.log.len(), 4); // 2 pretrain + 2 adversarial
        assert_eq!(artifacts.evaluation.reports[0].slice, Slice::Both);
        assert!(artifacts.evaluation.reports[0].acc.is_some());
    }

    #[test]
    fn resume_with_zero_epochs_reproduces_metrics() {
        let (source, target) = toy_sets(8);
        let cfg = tiny_cfg();
        let artifacts = run_training(&source, &target, tiny_shape(8), &cfg).unwrap();
        let frozen = TrainConfig { adversarial_epochs: 0, ..cfg };
        let resumed = resume_training(artifacts.model.clone(), &source, &target, &frozen).unwrap();
        assert_eq!(resumed.model, artifacts.model);
        for (a, b) in resumed.evaluation.reports.iter().zip(&artifacts.evaluation.reports) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn no_adaptation_matches_zeroed_weights_trajectory() {
        let (source, target) = toy_sets(8);
        let cfg = tiny_cfg().without_adaptation();
        assert_eq!(cfg.steps_suda, 0);
        assert_eq!(cfg.weights.alpha, 0.0);
        let a = run_training(&source, &target, tiny_shape(8), &cfg).unwrap();
        let b = run_training(&source, &target, tiny_shape(8), &cfg).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn sweep_single_cell_equals_direct_run() {
        let (source, target) = toy_sets(8);
        let cfg = tiny_cfg();
        let table = sweep(
            &source,
            &target,
            tiny_shape(8),
            &cfg,
            SweepAxis::StepsDae,
            &[1.0],
            &[cfg.seed],
            1,
        )
        .unwrap();
        assert_eq!(table.rows.len(), 1);
        let direct = run_training(&source, &target, tiny_shape(8), &cfg).unwrap();
        let row = &table.rows[0];
        assert_eq!(row.seeds_ok, 1);
        assert_eq!(row.seeds_failed, 0);
        let both_acc = row.stats[0][6].unwrap();
        assert_eq!(Some(both_acc.0), direct.evaluation.reports[0].acc);
        assert_eq!(both_acc.1, 0.0);
    }

    #[test]
    fn sweep_rows_follow_values_and_record_failures() {
        let (source, target) = toy_sets(8);
        let cfg = tiny_cfg();
        // Negative learning rate cells must be recorded as failed while the
        // sweep continues.
        let table = sweep(
            &source,
            &target,
            tiny_shape(8),
            &cfg,
            SweepAxis::LrDae,
            &[1e-3, -1.0],
            &[1, 2],
            2,
        )
        .unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].seeds_ok, 2);
        assert_eq!(table.rows[1].seeds_ok, 0);
        assert_eq!(table.rows[1].seeds_failed, 2);
        let csv = sweep_to_csv(&table);
        assert!(csv.contains("lr_dae"));
        assert!(csv.contains("n/a"));
    }

    #[test]
    fn sweep_is_deterministic_across_thread_counts() {
        let (source, target) = toy_sets(8);
        let cfg = tiny_cfg();
        let run = |threads| {
            sweep(
                &source,
                &target,
                tiny_shape(8),
                &cfg,
                SweepAxis::Eta,
                &[0.5, 1.0],
                &[3, 4],
                threads,
            )
            .unwrap()
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(sweep_to_csv(&a), sweep_to_csv(&b));
    }
}
