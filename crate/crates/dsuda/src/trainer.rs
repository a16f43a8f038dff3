//! Two-stage training: pre-train the classification auto-encoder on labeled
//! source data, transplant the pure encoder's parameters into the variance
//! encoder, then alternate discriminator ascent and encoder-side descent.
//! Also owns inference, target-set evaluation, and checkpoint persistence.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{write_atomic, ProcessedTrial};
use crate::error::{Error, Result};
use crate::metrics::{roc_auc, side_reports, MetricsReport, RocSeries};
use crate::model::{
    dae_loss_grads, discrimination_loss_grads, is_partition_error, pretrain_loss_grads, Batch,
    DsudaModel, LossWeights, ModelGrads, ModelShape, NetId, SignConvention,
};
use crate::nn::{Activation, DenseLayer, DenseNet, Optimizer, OptimizerKind};

/// Training settings. The two learning rates and the per-batch update steps
/// apply to the encoder-side (DAE) and discriminator (SUDA) objectives
/// respectively; `steps_suda = 0` disables adaptation entirely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr_dae: f64,
    pub lr_suda: f64,
    pub steps_dae: usize,
    pub steps_suda: usize,
    /// Adversarial batches take half of this from each domain.
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    pub adversarial_epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_dae: 1e-3,
            lr_suda: 1e-3,
            steps_dae: 10,
            steps_suda: 1,
            batch_size: 32,
            pretrain_epochs: 50,
            adversarial_epochs: 200,
            seed: 7,
            optimizer: OptimizerKind::Adam,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_dae > 0.0) || !(self.lr_suda > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.steps_dae == 0 {
            return Err(Error::Config("steps_dae must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        self.weights.validate()
    }

    /// The no-adaptation ablation: zero adversarial weights, no
    /// discriminator updates.
    pub fn without_adaptation(mut self) -> Self {
        self.weights.alpha = 0.0;
        self.weights.beta = 0.0;
        self.steps_suda = 0;
        self
    }
}

/// Training stage tag used in logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    Adversarial,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Adversarial => "adversarial",
        }
    }
}

/// Per-epoch mean losses. During pre-training the adversarial entries are
/// zero and the combined entry is `l_cls + l_ae`, the stage objective.
#[derive(Debug, Clone, Copy)]
pub struct TrainLogRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub l_cls: f64,
    pub l_ae: f64,
    pub l_d: f64,
    pub l_side: f64,
    pub l_ds: f64,
    pub l_dae: f64,
    pub seconds: f64,
}

/// Render log records as the training-log CSV.
pub fn log_to_csv(records: &[TrainLogRecord]) -> String {
    let mut out = String::from("stage,epoch,l_cls,l_ae,l_d,l_side,l_ds,l_dae,seconds\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3}",
            r.stage.name(),
            r.epoch,
            r.l_cls,
            r.l_ae,
            r.l_d,
            r.l_side,
            r.l_ds,
            r.l_dae,
            r.seconds
        );
    }
    out
}

/// Which optimizer step just ran, as observed per update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Suda,
    Dae,
}

/// Observation hook invoked after every optimizer step.
pub type Observer<'a> = &'a mut dyn FnMut(StepKind, &DsudaModel);

fn seed_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    // Distinct, order-independent streams per stage.
    let mut z = seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Seeded model construction for a run.
pub fn init_model(shape: ModelShape, cfg: &TrainConfig) -> Result<DsudaModel> {
    DsudaModel::new(shape, &mut seed_stream(cfg.seed, 0))
}

fn check_labeled(source: &[ProcessedTrial]) -> Result<()> {
    if source.is_empty() {
        return Err(Error::Train("source set is empty".into()));
    }
    if let Some(t) = source.iter().find(|t| t.label.is_none()) {
        return Err(Error::Train(format!("source trial {} is unlabeled", t.subject_id)));
    }
    Ok(())
}

/// Stage one: minimize `L_cls + L_ae` on the labeled source set, updating
/// only the pure encoder, classifier, and decoder. The variance encoder and
/// both discriminators are untouched.
pub fn pretrain(
    model: &mut DsudaModel,
    source: &[ProcessedTrial],
    cfg: &TrainConfig,
) -> Result<Vec<TrainLogRecord>> {
    cfg.validate()?;
    check_labeled(source)?;
    let mut rng = seed_stream(cfg.seed, 1);
    let mut opt_pe = Optimizer::new(cfg.optimizer, &model.pure_encoder);
    let mut opt_c = Optimizer::new(cfg.optimizer, &model.classifier);
    let mut opt_de = Optimizer::new(cfg.optimizer, &model.decoder);

    let mut log = Vec::with_capacity(cfg.pretrain_epochs);
    let mut indices: Vec<usize> = (0..source.len()).collect();
    let started = Instant::now();
    for epoch in 0..cfg.pretrain_epochs {
        indices.shuffle(&mut rng);
        let mut sum_cls = 0.0;
        let mut sum_ae = 0.0;
        let mut batches = 0.0;
        for chunk in indices.chunks(cfg.batch_size) {
            let batch = Batch::new(chunk.iter().map(|&i| &source[i]).collect(), vec![]);
            let mut grads = ModelGrads::zeros_like(model);
            let (cls, ae) = pretrain_loss_grads(model, &batch, Some(&mut grads))?;
            opt_pe.step(&mut model.pure_encoder, &grads.pure_encoder, cfg.lr_dae)?;
            opt_c.step(&mut model.classifier, &grads.classifier, cfg.lr_dae)?;
            opt_de.step(&mut model.decoder, &grads.decoder, cfg.lr_dae)?;
            sum_cls += cls;
            sum_ae += ae;
            batches += 1.0;
        }
        let l_cls = sum_cls / batches;
        let l_ae = sum_ae / batches;
        log.push(TrainLogRecord {
            stage: Stage::Pretrain,
            epoch,
            l_cls,
            l_ae,
            l_d: 0.0,
            l_side: 0.0,
            l_ds: 0.0,
            l_dae: l_cls + l_ae,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(log)
}

/// Copy the pure encoder's parameters into the variance encoder, value-exact.
pub fn transplant(model: &mut DsudaModel) -> Result<()> {
    let source = &model.pure_encoder;
    let dest = &model.variance_encoder;
    if source.layers.len() != dest.layers.len()
        || source
            .layers
            .iter()
            .zip(&dest.layers)
            .any(|(a, b)| a.in_dim != b.in_dim || a.out_dim != b.out_dim)
    {
        return Err(Error::Shape("encoders are not shape-identical".into()));
    }
    model.variance_encoder = model.pure_encoder.clone();
    Ok(())
}

/// Stage two: alternate `steps_suda` ascent steps on the discriminator
/// objective (updating only the two discriminators) with `steps_dae` descent
/// steps on the encoder-side objective (updating the two encoders, decoder,
/// and classifier). Batches draw equal counts from each domain; an epoch in
/// which every batch lacked a domain or side partition aborts the run.
pub fn adversarial_train(
    model: &mut DsudaModel,
    source: &[ProcessedTrial],
    target: &[ProcessedTrial],
    cfg: &TrainConfig,
) -> Result<Vec<TrainLogRecord>> {
    adversarial_train_observed(model, source, target, cfg, &mut |_, _| {})
}

/// [`adversarial_train`] with an observer called after every optimizer step.
pub fn adversarial_train_observed(
    model: &mut DsudaModel,
    source: &[ProcessedTrial],
    target: &[ProcessedTrial],
    cfg: &TrainConfig,
    observer: Observer,
) -> Result<Vec<TrainLogRecord>> {
    cfg.validate()?;
    check_labeled(source)?;
    if target.is_empty() {
        return Err(Error::Train("target set is empty".into()));
    }
    let mut rng = seed_stream(cfg.seed, 2);
    let mut opt_pe = Optimizer::new(cfg.optimizer, &model.pure_encoder);
    let mut opt_ve = Optimizer::new(cfg.optimizer, &model.variance_encoder);
    let mut opt_de = Optimizer::new(cfg.optimizer, &model.decoder);
    let mut opt_c = Optimizer::new(cfg.optimizer, &model.classifier);
    let mut opt_dd = Optimizer::new(cfg.optimizer, &model.domain_disc);
    let mut opt_sd = Optimizer::new(cfg.optimizer, &model.side_disc);

    let half = (cfg.batch_size / 2).max(1);
    let mut source_indices: Vec<usize> = (0..source.len()).collect();
    let mut target_order: Vec<usize> = (0..target.len()).collect();
    target_order.shuffle(&mut rng);
    let mut target_pos = 0usize;

    let mut log = Vec::with_capacity(cfg.adversarial_epochs);
    let started = Instant::now();
    for epoch in 0..cfg.adversarial_epochs {
        source_indices.shuffle(&mut rng);
        let mut sums = [0.0f64; 6]; // cls, ae, d, side, ds, dae
        let mut suda_evals = 0.0f64;
        let mut dae_evals = 0.0f64;
        let mut usable_batches = 0usize;
        let mut skipped = 0usize;

        for chunk in source_indices.chunks(half) {
            // Equal target half, cycling through a reshuffled order.
            let mut target_chunk = Vec::with_capacity(chunk.len());
            for _ in 0..chunk.len() {
                if target_pos == target_order.len() {
                    target_order.shuffle(&mut rng);
                    target_pos = 0;
                }
                target_chunk.push(&target[target_order[target_pos]]);
                target_pos += 1;
            }
            let batch = Batch::new(chunk.iter().map(|&i| &source[i]).collect(), target_chunk);
            if let Err(e) = batch.validate_adversarial() {
                if is_partition_error(&e) {
                    skipped += 1;
                    continue;
                }
                return Err(e);
            }
            usable_batches += 1;

            for _ in 0..cfg.steps_suda {
                let mut grads = ModelGrads::zeros_like(model);
                let losses =
                    discrimination_loss_grads(model, &batch, &cfg.weights, Some(&mut grads))?;
                // Maximize by negating and descending.
                grads.domain_disc.scale(-1.0);
                grads.side_disc.scale(-1.0);
                opt_dd.step(&mut model.domain_disc, &grads.domain_disc, cfg.lr_suda)?;
                opt_sd.step(&mut model.side_disc, &grads.side_disc, cfg.lr_suda)?;
                observer(StepKind::Suda, model);
                sums[2] += losses.domain;
                sums[3] += losses.side;
                sums[4] += losses.total;
                suda_evals += 1.0;
            }

            for _ in 0..cfg.steps_dae {
                let mut grads = ModelGrads::zeros_like(model);
                let losses = dae_loss_grads(model, &batch, &cfg.weights, Some(&mut grads))?;
                opt_pe.step(&mut model.pure_encoder, &grads.pure_encoder, cfg.lr_dae)?;
                opt_ve.step(&mut model.variance_encoder, &grads.variance_encoder, cfg.lr_dae)?;
                opt_de.step(&mut model.decoder, &grads.decoder, cfg.lr_dae)?;
                opt_c.step(&mut model.classifier, &grads.classifier, cfg.lr_dae)?;
                observer(StepKind::Dae, model);
                sums[0] += losses.classification;
                sums[1] += losses.reconstruction;
                sums[5] += losses.total;
                dae_evals += 1.0;
            }
        }

        if usable_batches == 0 {
            return Err(Error::Train(format!(
                "epoch {epoch}: every batch ({skipped}) lacked a domain or side partition"
            )));
        }
        log.push(TrainLogRecord {
            stage: Stage::Adversarial,
            epoch,
            l_cls: sums[0] / dae_evals.max(1.0),
            l_ae: sums[1] / dae_evals.max(1.0),
            l_d: sums[2] / suda_evals.max(1.0),
            l_side: sums[3] / suda_evals.max(1.0),
            l_ds: sums[4] / suda_evals.max(1.0),
            l_dae: sums[5] / dae_evals.max(1.0),
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(log)
}

/// Predict one aligned trial: label (tie at 0.5 goes to 1) and probability.
/// Only the pure encoder and classifier are evaluated.
pub fn infer(model: &DsudaModel, trial: &ProcessedTrial) -> Result<(u8, f64)> {
    model.predict(&trial.samples)
}

/// Evaluation of a labeled set: per-side metric reports plus ROC curves.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub reports: [MetricsReport; 3],
    pub roc: RocSeries,
}

pub fn evaluate(model: &DsudaModel, trials: &[ProcessedTrial]) -> Result<Evaluation> {
    if trials.is_empty() {
        return Err(Error::Data("cannot evaluate an empty set".into()));
    }
    let mut predictions = Vec::with_capacity(trials.len());
    let mut scores = Vec::with_capacity(trials.len());
    let mut truths = Vec::with_capacity(trials.len());
    let mut sides = Vec::with_capacity(trials.len());
    for t in trials {
        let truth = t
            .label
            .ok_or_else(|| Error::Data(format!("trial {} is unlabeled", t.subject_id)))?;
        let (label, p) = infer(model, t)?;
        predictions.push(label);
        scores.push(p);
        truths.push(truth.as_bit());
        sides.push(t.side);
    }
    Ok(Evaluation {
        reports: side_reports(&predictions, &truths, &sides)?,
        roc: roc_auc(&scores, &truths)?,
    })
}

// --- Checkpoint format -----------------------------------------------------
//
// Versioned line-based text document. Parameters are written with 17
// significant digits so a round-trip reproduces every f64 exactly; the
// trailing `end` sentinel makes truncation detectable.

const CHECKPOINT_MAGIC: &str = "dsuda-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serialize the model plus its training configuration.
pub fn save_checkpoint(model: &DsudaModel, cfg: &TrainConfig, path: &Path) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}");
    let _ = writeln!(text, "seed {}", cfg.seed);
    let _ = writeln!(text, "optimizer {}", cfg.optimizer.name());
    let _ = writeln!(text, "lr_dae {}", fmt_f64(cfg.lr_dae));
    let _ = writeln!(text, "lr_suda {}", fmt_f64(cfg.lr_suda));
    let _ = writeln!(text, "steps_dae {}", cfg.steps_dae);
    let _ = writeln!(text, "steps_suda {}", cfg.steps_suda);
    let _ = writeln!(text, "batch_size {}", cfg.batch_size);
    let _ = writeln!(text, "pretrain_epochs {}", cfg.pretrain_epochs);
    let _ = writeln!(text, "adversarial_epochs {}", cfg.adversarial_epochs);
    let _ = writeln!(text, "alpha {}", fmt_f64(cfg.weights.alpha));
    let _ = writeln!(text, "beta {}", fmt_f64(cfg.weights.beta));
    let _ = writeln!(text, "eta {}", fmt_f64(cfg.weights.eta));
    let _ = writeln!(text, "sign_convention {}", cfg.weights.sign_convention.name());
    let s = model.shape;
    let _ = writeln!(
        text,
        "shape {} {} {} {} {}",
        s.input_len, s.hidden, s.latent, s.decoder_hidden, s.head_hidden
    );
    for id in NetId::ALL {
        let net = model.net(id);
        let _ = writeln!(text, "net {} {}", id.name(), net.layers.len());
        for layer in &net.layers {
            let _ = writeln!(
                text,
                "layer {} {} {}",
                layer.in_dim,
                layer.out_dim,
                layer.activation.name()
            );
            for row in 0..layer.out_dim {
                let row_vals: Vec<String> = layer.weights
                    [row * layer.in_dim..(row + 1) * layer.in_dim]
                    .iter()
                    .map(|&v| fmt_f64(v))
                    .collect();
                let _ = writeln!(text, "w {}", row_vals.join(" "));
            }
            let bias: Vec<String> = layer.bias.iter().map(|&v| fmt_f64(v)).collect();
            let _ = writeln!(text, "b {}", bias.join(" "));
        }
    }
    let _ = writeln!(text, "end {CHECKPOINT_MAGIC}");
    write_atomic(path, |out| {
        out.extend_from_slice(text.as_bytes());
        Ok(())
    })
}

struct LineReader<'a> {
    lines: std::str::Lines<'a>,
    number: usize,
}

impl<'a> LineReader<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.number += 1;
        self.lines
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("file truncated at line {}", self.number)))
    }

    fn expect_tagged(&mut self, tag: &str) -> Result<&'a str> {
        let line = self.next()?;
        line.strip_prefix(tag)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| {
                Error::Checkpoint(format!(
                    "line {}: expected `{tag} ...`, found `{line}`",
                    self.number
                ))
            })
    }

    fn parse<T: std::str::FromStr>(&self, field: &str, what: &str) -> Result<T> {
        field.parse().map_err(|_| {
            Error::Checkpoint(format!("line {}: cannot parse {what} from `{field}`", self.number))
        })
    }

    fn parse_finite(&self, field: &str) -> Result<f64> {
        let v: f64 = self.parse(field, "parameter")?;
        if !v.is_finite() {
            return Err(Error::Checkpoint(format!(
                "line {}: non-finite parameter {v}",
                self.number
            )));
        }
        Ok(v)
    }

    fn parse_vec(&mut self, tag: &str, expected: usize) -> Result<Vec<f64>> {
        let rest = self.expect_tagged(tag)?;
        let values: Vec<f64> = rest
            .split(' ')
            .map(|f| self.parse_finite(f))
            .collect::<Result<_>>()?;
        if values.len() != expected {
            return Err(Error::Checkpoint(format!(
                "line {}: expected {expected} values, found {}",
                self.number,
                values.len()
            )));
        }
        Ok(values)
    }
}

/// Load a checkpoint. Rejects version mismatches, truncated files, and
/// non-finite parameters without producing a partial model.
pub fn load_checkpoint(path: &Path) -> Result<(DsudaModel, TrainConfig)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = LineReader { lines: text.lines(), number: 0 };

    let header = r.next()?;
    let version = header
        .strip_prefix(CHECKPOINT_MAGIC)
        .and_then(|rest| rest.trim().strip_prefix('v'))
        .ok_or_else(|| Error::Checkpoint(format!("not a checkpoint file: `{header}`")))?;
    let version: u32 = r.parse(version, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "version {version} not supported (expected {CHECKPOINT_VERSION})"
        )));
    }

    let seed: u64 = { let f = r.expect_tagged("seed")?; r.parse(f, "seed")? };
    let optimizer = OptimizerKind::parse(r.expect_tagged("optimizer")?)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let lr_dae = { let f = r.expect_tagged("lr_dae")?; r.parse_finite(f)? };
    let lr_suda = { let f = r.expect_tagged("lr_suda")?; r.parse_finite(f)? };
    let steps_dae: usize = { let f = r.expect_tagged("steps_dae")?; r.parse(f, "steps_dae")? };
    let steps_suda: usize = { let f = r.expect_tagged("steps_suda")?; r.parse(f, "steps_suda")? };
    let batch_size: usize = { let f = r.expect_tagged("batch_size")?; r.parse(f, "batch_size")? };
    let pretrain_epochs: usize =
        { let f = r.expect_tagged("pretrain_epochs")?; r.parse(f, "pretrain_epochs")? };
    let adversarial_epochs: usize =
        { let f = r.expect_tagged("adversarial_epochs")?; r.parse(f, "adversarial_epochs")? };
    let alpha = { let f = r.expect_tagged("alpha")?; r.parse_finite(f)? };
    let beta = { let f = r.expect_tagged("beta")?; r.parse_finite(f)? };
    let eta = { let f = r.expect_tagged("eta")?; r.parse_finite(f)? };
    let sign_convention = SignConvention::parse(r.expect_tagged("sign_convention")?)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;

    let shape_fields: Vec<&str> = r.expect_tagged("shape")?.split(' ').collect();
    if shape_fields.len() != 5 {
        return Err(Error::Checkpoint("shape line needs 5 fields".into()));
    }
    let shape = ModelShape {
        input_len: r.parse(shape_fields[0], "input_len")?,
        hidden: r.parse(shape_fields[1], "hidden")?,
        latent: r.parse(shape_fields[2], "latent")?,
        decoder_hidden: r.parse(shape_fields[3], "decoder_hidden")?,
        head_hidden: r.parse(shape_fields[4], "head_hidden")?,
    };

    let cfg = TrainConfig {
        lr_dae,
        lr_suda,
        steps_dae,
        steps_suda,
        batch_size,
        pretrain_epochs,
        adversarial_epochs,
        seed,
        optimizer,
        weights: LossWeights { alpha, beta, eta, sign_convention },
    };

    let mut model = init_model(shape, &cfg)?;
    for id in NetId::ALL {
        let net_fields: Vec<&str> = r.expect_tagged("net")?.split(' ').collect();
        if net_fields.len() != 2 || net_fields[0] != id.name() {
            return Err(Error::Checkpoint(format!(
                "expected network `{}`, found `{}`",
                id.name(),
                net_fields.join(" ")
            )));
        }
        let n_layers: usize = r.parse(net_fields[1], "layer count")?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let layer_fields: Vec<&str> = r.expect_tagged("layer")?.split(' ').collect();
            if layer_fields.len() != 3 {
                return Err(Error::Checkpoint("layer line needs 3 fields".into()));
            }
            let in_dim: usize = r.parse(layer_fields[0], "in_dim")?;
            let out_dim: usize = r.parse(layer_fields[1], "out_dim")?;
            let activation = Activation::parse(layer_fields[2])
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
            let mut weights = Vec::with_capacity(in_dim * out_dim);
            for _ in 0..out_dim {
                weights.extend(r.parse_vec("w", in_dim)?);
            }
            let bias = r.parse_vec("b", out_dim)?;
            layers.push(
                DenseLayer::from_parts(in_dim, out_dim, weights, bias, activation)
                    .map_err(|e| Error::Checkpoint(e.to_string()))?,
            );
        }
        *model.net_mut(id) =
            DenseNet::new(layers).map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    let sentinel = r.next()?;
    if sentinel != format!("end {CHECKPOINT_MAGIC}") {
        return Err(Error::Checkpoint(format!("missing end sentinel, found `{sentinel}`")));
    }
    Ok((model, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClassLabel, Domain, Side};
    use rand::Rng;

    fn toy_trial(
        rng: &mut ChaCha8Rng,
        n: usize,
        domain: Domain,
        side: Side,
        label: Option<ClassLabel>,
        subject: usize,
    ) -> ProcessedTrial {
        // Linearly separable toy signal: class shifts the mean.
        let offset = label.map_or(0.0, |l| l.as_f64() * 0.35);
        ProcessedTrial {
            subject_id: format!("{}{subject:02}", domain.name()),
            domain,
            side,
            label,
            duration_ms: 8.0,
            segment_index: 0,
            origin: subject,
            degenerate: false,
            samples: (0..n)
                .map(|_| (rng.gen_range(0.0..0.5) + offset).clamp(0.0, 1.0))
                .collect(),
        }
    }

    fn toy_sets(rng: &mut ChaCha8Rng, n: usize) -> (Vec<ProcessedTrial>, Vec<ProcessedTrial>) {
        let source: Vec<ProcessedTrial> = (0..24)
            .map(|i| {
                toy_trial(
                    rng,
                    n,
                    Domain::Source,
                    if i % 2 == 0 { Side::Left } else { Side::Right },
                    Some(ClassLabel::from_bit((i % 2) as u8).unwrap()),
                    i,
                )
            })
            .collect();
        let target: Vec<ProcessedTrial> = (0..16)
            .map(|i| {
                toy_trial(
                    rng,
                    n,
                    Domain::Target,
                    if i % 2 == 0 { Side::Left } else { Side::Right },
                    Some(ClassLabel::from_bit(((i / 2) % 2) as u8).unwrap()),
                    i,
                )
            })
            .collect();
        (source, target)
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            pretrain_epochs: 3,
            adversarial_epochs: 2,
            steps_dae: 2,
            steps_suda: 1,
            seed: 31,
            ..TrainConfig::default()
        }
    }

    fn small_shape(n: usize) -> ModelShape {
        ModelShape { input_len: n, hidden: 8, latent: 5, decoder_hidden: 6, head_hidden: 4 }
    }

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (source, _) = toy_sets(&mut rng, 9);
        let cfg = TrainConfig { pretrain_epochs: 0, ..small_cfg() };
        let mut model = init_model(small_shape(9), &cfg).unwrap();
        let before = model.clone();
        let log = pretrain(&mut model, &source, &cfg).unwrap();
        assert!(log.is_empty());
        assert_eq!(model, before);
    }

    #[test]
    fn pretrain_touches_only_its_three_networks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (source, _) = toy_sets(&mut rng, 9);
        let cfg = small_cfg();
        let mut model = init_model(small_shape(9), &cfg).unwrap();
        let before = model.clone();
        pretrain(&mut model, &source, &cfg).unwrap();
        assert_eq!(model.variance_encoder, before.variance_encoder);
        assert_eq!(model.domain_disc, before.domain_disc);
        assert_eq!(model.side_disc, before.side_disc);
        assert_ne!(model.pure_encoder, before.pure_encoder);
        assert_ne!(model.classifier, before.classifier);
        assert_ne!(model.decoder, before.decoder);
    }

    #[test]
    fn pretrain_reaches_high_accuracy_on_separable_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (source, _) = toy_sets(&mut rng, 9);
        let cfg = TrainConfig { pretrain_epochs: 120, ..small_cfg() };
        let mut model = init_model(small_shape(9), &cfg).unwrap();
        let log = pretrain(&mut model, &source, &cfg).unwrap();
        let correct = source
            .iter()
            .filter(|t| infer(&model, t).unwrap().0 == t.label.unwrap().as_bit())
            .count();
        let acc = correct as f64 / source.len() as f64;
        assert!(acc >= 0.95, "training accuracy {acc}");
        assert!(log.last().unwrap().l_cls < log.first().unwrap().l_cls);
    }

    #[test]
    fn pretrain_rejects_unlabeled_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut source, _) = toy_sets(&mut rng, 9);
        source[0].label = None;
        let cfg = small_cfg();
        let mut model = init_model(small_shape(9), &cfg).unwrap();
        assert!(pretrain(&mut model, &source, &cfg).is_err());
    }

    #[test]
    fn transplant_copies_without_aliasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = small_cfg();
        let mut model = init_model(small_shape(9), &cfg).unwrap();
        assert_ne!(model.pure_encoder, model.variance_encoder);
        transplant(&mut model).unwrap();
        assert_eq!(model.pure_encoder, model.variance_encoder);
        // Idempotent.
        let snapshot = model.clone();
        transplant(&mut model).unwrap();
        assert_eq!(model, snapshot);
        // Embeddings coincide after the copy.
        let x: Vec<f64> = (0..9).map(|_| rng.gen_range(0.0..1.0)).collect();
        let pair = model.encode(&x).unwrap();
        assert_eq!(pair.class_embedding, pair.variance_embedding);
        // Updating the variance encoder afterwards leaves the pure one alone.
        model.variance_encoder.for_each_param_mut(|p| *p += 1.0);
        assert_eq!(model.pure_encoder, snapshot.pure_encoder);
        assert_ne!(model.variance_encoder, snapshot.variance_encoder);
    }

    #[test]
    fn adversarial_stage_separation_and_alternation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (source, target) = toy_sets(&mut rng, 9);
        let cfg = small_cfg();
        let mut model = init_model(small_shape(9), &cfg).unwrap();
        pretrain(&mut model, &source, &cfg).unwrap();
        transplant(&mut model).unwrap();

        let mut last = model.clone();
        let mut suda_steps = 0usize;
        let mut dae_steps = 0usize;
        let mut violations = 0usize;
        adversarial_train_observed(&mut model, &source, &target, &cfg, &mut |kind, m| {
            match kind {
                StepKind::Suda => {
                    suda_steps += 1;
                    for id in NetId::ENCODER_SIDE {
                        if m.net(id) != last.net(id) {
                            violations += 1;
                        }
                    }
                }
                StepKind::Dae => {
                    dae_steps += 1;
                    for id in NetId::DISCRIMINATOR_SIDE {
                        if m.net(id) != last.net(id) {
                            violations += 1;
                        }
                    }
                }
            }
            last = m.clone();
        })
        .unwrap();
        assert_eq!(violations, 0);
        // 24 source items, half = 4 -> 6 batches per epoch, 2 epochs.
        assert_eq!(suda_steps, 6 * 2 * cfg.steps_suda);
        assert_eq!(dae_steps, 6 * 2 * cfg.steps_dae);
    }

    #[test]
    fn same_seed_same_data_is_bitwise_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (source, target) = toy_sets(&mut rng, 9);
        let cfg = small_cfg();
        let run = || {
            let mut model = init_model(small_shape(9), &cfg).unwrap();
            pretrain(&mut model, &source, &cfg).unwrap();
            transplant(&mut model).unwrap();
            adversarial_train(&mut model, &source, &target, &cfg).unwrap();
            model
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn infer_thresholds_and_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (source, _) = toy_sets(&mut rng, 9);
        let cfg = small_cfg();
        let model = init_model(small_shape(9), &cfg).unwrap();
        let (l1, p1) = infer(&model, &source[0]).unwrap();
        let (l2, p2) = infer(&model, &source[0]).unwrap();
        assert_eq!((l1, p1), (l2, p2));
        assert_eq!(l1, u8::from(p1 >= 0.5));
    }

    #[test]
    fn checkpoint_roundtrip_is_value_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (source, target) = toy_sets(&mut rng, 9);
        let cfg = small_cfg();
        let mut model = init_model(small_shape(9), &cfg).unwrap();
        pretrain(&mut model, &source, &cfg).unwrap();
        transplant(&mut model).unwrap();
        adversarial_train(&mut model, &source, &target, &cfg).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.dsuda");
        save_checkpoint(&model, &cfg, &path).unwrap();
        let (loaded, loaded_cfg) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(loaded_cfg, cfg);

        // Metrics recompute identically from the loaded model.
        let eval_a = evaluate(&model, &target).unwrap();
        let eval_b = evaluate(&loaded, &target).unwrap();
        for (a, b) in eval_a.reports.iter().zip(&eval_b.reports) {
            assert_eq!(a.values(), b.values());
        }
        assert_eq!(eval_a.roc.auc_micro, eval_b.roc.auc_micro);
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let _ = &mut rng;
        let cfg = small_cfg();
        let model = init_model(small_shape(9), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.dsuda");
        save_checkpoint(&model, &cfg, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let truncated: Vec<&str> = text.lines().collect();
        let cut = truncated.len() - 1;
        std::fs::write(&path, truncated[..cut].join("\n")).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("truncated") || err.to_string().contains("sentinel"), "{err}");
    }

    #[test]
    fn corrupted_version_and_nan_are_rejected() {
        let cfg = small_cfg();
        let model = init_model(small_shape(9), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.dsuda");
        save_checkpoint(&model, &cfg, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        std::fs::write(&path, text.replacen("v1", "v9", 1)).unwrap();
        assert!(load_checkpoint(&path).unwrap_err().to_string().contains("version"));

        let with_nan = text.replacen("w ", "w NaN ", 1);
        std::fs::write(&path, with_nan).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn evaluate_rejects_unlabeled_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (_, mut target) = toy_sets(&mut rng, 9);
        target[3].label = None;
        let cfg = small_cfg();
        let model = init_model(small_shape(9), &cfg).unwrap();
        assert!(evaluate(&model, &target).is_err());
    }

    #[test]
    fn log_csv_schema() {
        let records = vec![TrainLogRecord {
            stage: Stage::Pretrain,
            epoch: 0,
            l_cls: 0.7,
            l_ae: 0.1,
            l_d: 0.0,
            l_side: 0.0,
            l_ds: 0.0,
            l_dae: 0.8,
            seconds: 0.5,
        }];
        let csv = log_to_csv(&records);
        assert!(csv.starts_with("stage,epoch,l_cls,l_ae,l_d,l_side,l_ds,l_dae,seconds\n"));
        assert!(csv.contains("pretrain,0,"));
    }
}
