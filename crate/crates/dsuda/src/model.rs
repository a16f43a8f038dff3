//! The six-network disentangled model and its loss terms.
//!
//! Two tanh encoders split a trial into a class-related embedding and a
//! domain-variance embedding; a sigmoid decoder reconstructs the trial from
//! both, a sigmoid classifier reads the class embedding, and two sigmoid
//! discriminators score domain membership (on the variance embedding) and
//! ear side (on the class embedding).
//!
//! Loss layout, with `S`/`T` the source/target halves of a batch and
//! `D = S ∪ T` split into left/right partitions:
//!
//! - classification: mean binary cross-entropy over `S`
//! - reconstruction: mean MSE over `D`
//! - domain score gap `L_d = E_T[dd(ve(x))] − E_S[dd(ve(x))]`
//! - side score gap `L_side = E_right[sd(pe(x))] − E_left[sd(pe(x))]`
//! - discriminator objective `L_DS = L_d + η·L_side`, maximized with the
//!   encoders frozen
//! - encoder-side objective `L_DAE = α·L'_d + β·L'_side + L_ae + L_cls`,
//!   minimized with the discriminators frozen, where the signs of the two
//!   adversarial terms follow the configured [`SignConvention`]

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Domain, ProcessedTrial, Side};
use crate::error::{Error, Result};
use crate::nn::{binary_cross_entropy, mse, Activation, DenseNet, GradientSet};

/// Layer widths of the assembly. Both encoders are
/// `input_len -> hidden -> latent`, the decoder is
/// `2·latent -> decoder_hidden -> input_len`, and the classifier and both
/// discriminators are `latent -> head_hidden -> 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelShape {
    pub input_len: usize,
    pub hidden: usize,
    pub latent: usize,
    pub decoder_hidden: usize,
    pub head_hidden: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape { input_len: 131, hidden: 64, latent: 32, decoder_hidden: 96, head_hidden: 16 }
    }
}

impl ModelShape {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_len", self.input_len),
            ("hidden", self.hidden),
            ("latent", self.latent),
            ("decoder_hidden", self.decoder_hidden),
            ("head_hidden", self.head_hidden),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("model shape field {name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Sign choice for the two adversarial terms of the encoder-side objective.
///
/// `Confuse` drives the encoders to fool the discriminators (target variance
/// toward the source label, left features toward the right label); `Literal`
/// negates both terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignConvention {
    Confuse,
    Literal,
}

impl SignConvention {
    pub fn name(self) -> &'static str {
        match self {
            SignConvention::Confuse => "confuse",
            SignConvention::Literal => "literal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "confuse" => Ok(SignConvention::Confuse),
            "literal" => Ok(SignConvention::Literal),
            other => Err(Error::Config(format!(
                "sign convention must be confuse or literal, got `{other}`"
            ))),
        }
    }

    /// (domain-term sign, side-term sign) inside the encoder objective.
    fn signs(self) -> (f64, f64) {
        match self {
            SignConvention::Confuse => (1.0, -1.0),
            SignConvention::Literal => (-1.0, 1.0),
        }
    }
}

/// Loss-term weights α, β, η plus the adversarial sign convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub sign_convention: SignConvention,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 1.0, beta: 1e-6, eta: 1.0, sign_convention: SignConvention::Confuse }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("eta", self.eta)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("loss weight {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Identifies one of the six networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetId {
    PureEncoder,
    VarianceEncoder,
    Decoder,
    Classifier,
    DomainDisc,
    SideDisc,
}

impl NetId {
    pub const ALL: [NetId; 6] = [
        NetId::PureEncoder,
        NetId::VarianceEncoder,
        NetId::Decoder,
        NetId::Classifier,
        NetId::DomainDisc,
        NetId::SideDisc,
    ];

    /// The four networks the encoder-side (DAE) step trains.
    pub const ENCODER_SIDE: [NetId; 4] =
        [NetId::PureEncoder, NetId::VarianceEncoder, NetId::Decoder, NetId::Classifier];

    /// The two networks the discriminator (SUDA) step trains.
    pub const DISCRIMINATOR_SIDE: [NetId; 2] = [NetId::DomainDisc, NetId::SideDisc];

    pub fn name(self) -> &'static str {
        match self {
            NetId::PureEncoder => "pure_encoder",
            NetId::VarianceEncoder => "variance_encoder",
            NetId::Decoder => "decoder",
            NetId::Classifier => "classifier",
            NetId::DomainDisc => "domain_disc",
            NetId::SideDisc => "side_disc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        NetId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::Checkpoint(format!("unknown network `{s}`")))
    }
}

/// Class-related and class-unrelated embeddings of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPair {
    pub class_embedding: Vec<f64>,
    pub variance_embedding: Vec<f64>,
}

/// The full six-network assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct DsudaModel {
    pub shape: ModelShape,
    pub pure_encoder: DenseNet,
    pub variance_encoder: DenseNet,
    pub decoder: DenseNet,
    pub classifier: DenseNet,
    pub domain_disc: DenseNet,
    pub side_disc: DenseNet,
}

impl DsudaModel {
    /// Seeded init. Networks are constructed in a fixed order so one seed
    /// always yields the same parameters.
    pub fn new<R: Rng>(shape: ModelShape, rng: &mut R) -> Result<Self> {
        shape.validate()?;
        let pure_encoder =
            DenseNet::two_layer(shape.input_len, shape.hidden, shape.latent, Activation::Tanh, rng);
        let variance_encoder =
            DenseNet::two_layer(shape.input_len, shape.hidden, shape.latent, Activation::Tanh, rng);
        let decoder = DenseNet::two_layer(
            2 * shape.latent,
            shape.decoder_hidden,
            shape.input_len,
            Activation::Sigmoid,
            rng,
        );
        let classifier =
            DenseNet::two_layer(shape.latent, shape.head_hidden, 1, Activation::Sigmoid, rng);
        let domain_disc =
            DenseNet::two_layer(shape.latent, shape.head_hidden, 1, Activation::Sigmoid, rng);
        let side_disc =
            DenseNet::two_layer(shape.latent, shape.head_hidden, 1, Activation::Sigmoid, rng);
        Ok(DsudaModel {
            shape,
            pure_encoder,
            variance_encoder,
            decoder,
            classifier,
            domain_disc,
            side_disc,
        })
    }

    pub fn net(&self, id: NetId) -> &DenseNet {
        match id {
            NetId::PureEncoder => &self.pure_encoder,
            NetId::VarianceEncoder => &self.variance_encoder,
            NetId::Decoder => &self.decoder,
            NetId::Classifier => &self.classifier,
            NetId::DomainDisc => &self.domain_disc,
            NetId::SideDisc => &self.side_disc,
        }
    }

    pub fn net_mut(&mut self, id: NetId) -> &mut DenseNet {
        match id {
            NetId::PureEncoder => &mut self.pure_encoder,
            NetId::VarianceEncoder => &mut self.variance_encoder,
            NetId::Decoder => &mut self.decoder,
            NetId::Classifier => &mut self.classifier,
            NetId::DomainDisc => &mut self.domain_disc,
            NetId::SideDisc => &mut self.side_disc,
        }
    }

    /// Both embeddings of one aligned trial.
    pub fn encode(&self, x: &[f64]) -> Result<LatentPair> {
        Ok(LatentPair {
            class_embedding: self.pure_encoder.infer(x)?,
            variance_embedding: self.variance_encoder.infer(x)?,
        })
    }

    /// Decode a latent pair back to signal space. Outputs lie in (0,1).
    pub fn reconstruct(&self, pair: &LatentPair) -> Result<Vec<f64>> {
        if pair.class_embedding.len() != self.shape.latent
            || pair.variance_embedding.len() != self.shape.latent
        {
            return Err(Error::Shape(format!(
                "latent pair of lengths {}/{}, model latent size is {}",
                pair.class_embedding.len(),
                pair.variance_embedding.len(),
                self.shape.latent
            )));
        }
        let mut z = Vec::with_capacity(2 * self.shape.latent);
        z.extend_from_slice(&pair.class_embedding);
        z.extend_from_slice(&pair.variance_embedding);
        self.decoder.infer(&z)
    }

    /// Probability of the positive class from a class embedding.
    pub fn classify(&self, class_embedding: &[f64]) -> Result<f64> {
        Ok(self.classifier.infer(class_embedding)?[0])
    }

    /// Inference path: class embedding then classifier. The variance encoder,
    /// decoder, and discriminators are never evaluated.
    /// A probability of exactly 0.5 maps to label 1.
    pub fn predict(&self, x: &[f64]) -> Result<(u8, f64)> {
        let p = self.classify(&self.pure_encoder.infer(x)?)?;
        Ok((u8::from(p >= 0.5), p))
    }
}

/// Per-network gradients of one loss evaluation. Networks a loss does not
/// train hold all-zero sets.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub pure_encoder: GradientSet,
    pub variance_encoder: GradientSet,
    pub decoder: GradientSet,
    pub classifier: GradientSet,
    pub domain_disc: GradientSet,
    pub side_disc: GradientSet,
}

impl ModelGrads {
    pub fn zeros_like(model: &DsudaModel) -> Self {
        ModelGrads {
            pure_encoder: GradientSet::zeros_like(&model.pure_encoder),
            variance_encoder: GradientSet::zeros_like(&model.variance_encoder),
            decoder: GradientSet::zeros_like(&model.decoder),
            classifier: GradientSet::zeros_like(&model.classifier),
            domain_disc: GradientSet::zeros_like(&model.domain_disc),
            side_disc: GradientSet::zeros_like(&model.side_disc),
        }
    }

    pub fn get(&self, id: NetId) -> &GradientSet {
        match id {
            NetId::PureEncoder => &self.pure_encoder,
            NetId::VarianceEncoder => &self.variance_encoder,
            NetId::Decoder => &self.decoder,
            NetId::Classifier => &self.classifier,
            NetId::DomainDisc => &self.domain_disc,
            NetId::SideDisc => &self.side_disc,
        }
    }
}

/// One training batch: labeled source items plus target items.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub source: Vec<&'a ProcessedTrial>,
    pub target: Vec<&'a ProcessedTrial>,
}

impl<'a> Batch<'a> {
    pub fn new(source: Vec<&'a ProcessedTrial>, target: Vec<&'a ProcessedTrial>) -> Self {
        Batch { source, target }
    }

    pub fn all(&self) -> impl Iterator<Item = &&'a ProcessedTrial> {
        self.source.iter().chain(self.target.iter())
    }

    pub fn len(&self) -> usize {
        self.source.len() + self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn side_counts(&self) -> (usize, usize) {
        let left = self.all().filter(|t| t.side == Side::Left).count();
        (left, self.len() - left)
    }

    /// Adversarial losses need both domains and both sides present.
    pub fn validate_adversarial(&self) -> Result<()> {
        if self.source.is_empty() || self.target.is_empty() {
            return Err(Error::Train(format!(
                "batch partition: {} source and {} target items; adversarial losses need both domains",
                self.source.len(),
                self.target.len()
            )));
        }
        let (left, right) = self.side_counts();
        if left == 0 || right == 0 {
            return Err(Error::Train(format!(
                "batch partition: {left} left and {right} right items; side loss needs both ears"
            )));
        }
        Ok(())
    }

    fn check_shapes(&self, model: &DsudaModel) -> Result<()> {
        for t in self.all() {
            if t.samples.len() != model.shape.input_len {
                return Err(Error::Shape(format!(
                    "trial {} has {} points, model expects {}",
                    t.subject_id,
                    t.samples.len(),
                    model.shape.input_len
                )));
            }
            if t.domain == Domain::Source && t.label.is_none() {
                return Err(Error::Data(format!(
                    "source trial {} in batch is unlabeled",
                    t.subject_id
                )));
            }
        }
        Ok(())
    }
}

/// Whether an error marks a skippable batch-partition defect rather than a
/// hard failure.
pub fn is_partition_error(err: &Error) -> bool {
    matches!(err, Error::Train(msg) if msg.starts_with("batch partition"))
}

/// Values of the discriminator objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminationLosses {
    pub domain: f64,
    pub side: f64,
    pub total: f64,
}

/// Values of the encoder-side objective and its components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaeLosses {
    pub classification: f64,
    pub reconstruction: f64,
    /// Signed domain confusion term, before the α weight.
    pub domain_term: f64,
    /// Signed side confusion term, before the β weight.
    pub side_term: f64,
    pub total: f64,
}

/// Mean binary cross-entropy of the classifier over the source items.
pub fn classification_loss(model: &DsudaModel, batch: &Batch) -> Result<f64> {
    classification_loss_grads(model, batch, None)
}

/// As [`classification_loss`], accumulating gradients for the pure encoder
/// and the classifier when an accumulator is supplied.
pub fn classification_loss_grads(
    model: &DsudaModel,
    batch: &Batch,
    mut grads: Option<&mut ModelGrads>,
) -> Result<f64> {
    if batch.source.is_empty() {
        return Err(Error::Train("classification loss over an empty source batch".into()));
    }
    batch.check_shapes(model)?;
    let n = batch.source.len() as f64;
    let mut total = 0.0;
    for trial in &batch.source {
        let label = trial.label.expect("validated above").as_f64();
        let (e_c, cache_pe) = model.pure_encoder.forward(&trial.samples)?;
        let (p, cache_c) = model.classifier.forward(&e_c)?;
        let (loss, dp) = binary_cross_entropy(p[0], label)?;
        total += loss;
        if let Some(acc) = grads.as_deref_mut() {
            let d_ec = model.classifier.backward_acc(&cache_c, &[dp / n], &mut acc.classifier)?;
            model.pure_encoder.backward_acc(&cache_pe, &d_ec, &mut acc.pure_encoder)?;
        }
    }
    Ok(total / n)
}

/// Mean reconstruction MSE over every item of the batch (both domains).
pub fn reconstruction_loss(model: &DsudaModel, batch: &Batch) -> Result<f64> {
    reconstruction_loss_grads(model, batch, None)
}

/// As [`reconstruction_loss`], accumulating gradients for both encoders and
/// the decoder when an accumulator is supplied.
pub fn reconstruction_loss_grads(
    model: &DsudaModel,
    batch: &Batch,
    mut grads: Option<&mut ModelGrads>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Train("reconstruction loss over an empty batch".into()));
    }
    batch.check_shapes(model)?;
    let n = batch.len() as f64;
    let latent = model.shape.latent;
    let mut total = 0.0;
    for trial in batch.all() {
        let (e_c, cache_pe) = model.pure_encoder.forward(&trial.samples)?;
        let (e_v, cache_ve) = model.variance_encoder.forward(&trial.samples)?;
        let mut z = e_c;
        z.extend_from_slice(&e_v);
        let (recon, cache_de) = model.decoder.forward(&z)?;
        let (loss, mut d_recon) = mse(&recon, &trial.samples)?;
        total += loss;
        if let Some(acc) = grads.as_deref_mut() {
            for d in &mut d_recon {
                *d /= n;
            }
            let d_z = model.decoder.backward_acc(&cache_de, &d_recon, &mut acc.decoder)?;
            model
                .pure_encoder
                .backward_acc(&cache_pe, &d_z[..latent], &mut acc.pure_encoder)?;
            model
                .variance_encoder
                .backward_acc(&cache_ve, &d_z[latent..], &mut acc.variance_encoder)?;
        }
    }
    Ok(total / n)
}

/// Discriminator objective `L_DS = L_d + η·L_side` and its components.
pub fn discrimination_loss(
    model: &DsudaModel,
    batch: &Batch,
    weights: &LossWeights,
) -> Result<DiscriminationLosses> {
    discrimination_loss_grads(model, batch, weights, None)
}

/// As [`discrimination_loss`]; when an accumulator is supplied it receives
/// `∇ L_DS` on the two discriminators only (the encoders stay frozen).
pub fn discrimination_loss_grads(
    model: &DsudaModel,
    batch: &Batch,
    weights: &LossWeights,
    mut grads: Option<&mut ModelGrads>,
) -> Result<DiscriminationLosses> {
    weights.validate()?;
    batch.validate_adversarial()?;
    batch.check_shapes(model)?;
    let n_source = batch.source.len() as f64;
    let n_target = batch.target.len() as f64;
    let (n_left, n_right) = batch.side_counts();
    let (n_left, n_right) = (n_left as f64, n_right as f64);

    let mut domain = 0.0;
    let mut side = 0.0;
    for trial in batch.all() {
        // Domain score on the variance embedding.
        let e_v = model.variance_encoder.infer(&trial.samples)?;
        let (s_d, cache_dd) = model.domain_disc.forward(&e_v)?;
        let domain_weight = match trial.domain {
            Domain::Target => 1.0 / n_target,
            Domain::Source => -1.0 / n_source,
        };
        domain += domain_weight * s_d[0];

        // Side score on the class embedding.
        let e_c = model.pure_encoder.infer(&trial.samples)?;
        let (s_s, cache_sd) = model.side_disc.forward(&e_c)?;
        let side_weight = match trial.side {
            Side::Right => 1.0 / n_right,
            Side::Left => -1.0 / n_left,
        };
        side += side_weight * s_s[0];

        if let Some(acc) = grads.as_deref_mut() {
            model
                .domain_disc
                .backward_acc(&cache_dd, &[domain_weight], &mut acc.domain_disc)?;
            model
                .side_disc
                .backward_acc(&cache_sd, &[weights.eta * side_weight], &mut acc.side_disc)?;
        }
    }
    Ok(DiscriminationLosses { domain, side, total: domain + weights.eta * side })
}

/// Encoder-side objective `L_DAE = α·L'_d + β·L'_side + L_ae + L_cls`.
pub fn dae_loss(model: &DsudaModel, batch: &Batch, weights: &LossWeights) -> Result<DaeLosses> {
    dae_loss_grads(model, batch, weights, None)
}

/// As [`dae_loss`]; when an accumulator is supplied it receives `∇ L_DAE` on
/// the two encoders, the decoder, and the classifier. The discriminators are
/// traversed but stay frozen: gradients flow through them into the encoders
/// without touching their parameters.
pub fn dae_loss_grads(
    model: &DsudaModel,
    batch: &Batch,
    weights: &LossWeights,
    mut grads: Option<&mut ModelGrads>,
) -> Result<DaeLosses> {
    weights.validate()?;
    batch.validate_adversarial()?;
    batch.check_shapes(model)?;
    let (sign_domain, sign_side) = weights.sign_convention.signs();
    let n_all = batch.len() as f64;
    let n_source = batch.source.len() as f64;
    let n_target = batch.target.len() as f64;
    let (n_left, _) = batch.side_counts();
    let n_left = n_left as f64;
    let latent = model.shape.latent;

    let mut classification = 0.0;
    let mut reconstruction = 0.0;
    let mut domain_term = 0.0;
    let mut side_term = 0.0;

    for trial in batch.all() {
        let (e_c, cache_pe) = model.pure_encoder.forward(&trial.samples)?;
        let (e_v, cache_ve) = model.variance_encoder.forward(&trial.samples)?;
        let mut d_ec = vec![0.0; latent];
        let mut d_ev = vec![0.0; latent];

        // Reconstruction over every item.
        let mut z = e_c.clone();
        z.extend_from_slice(&e_v);
        let (recon, cache_de) = model.decoder.forward(&z)?;
        let (ae, mut d_recon) = mse(&recon, &trial.samples)?;
        reconstruction += ae / n_all;
        if let Some(acc) = grads.as_deref_mut() {
            for d in &mut d_recon {
                *d /= n_all;
            }
            let d_z = model.decoder.backward_acc(&cache_de, &d_recon, &mut acc.decoder)?;
            for (dst, src) in d_ec.iter_mut().zip(&d_z[..latent]) {
                *dst += src;
            }
            for (dst, src) in d_ev.iter_mut().zip(&d_z[latent..]) {
                *dst += src;
            }
        }

        // Classification over the source half.
        if trial.domain == Domain::Source {
            let label = trial.label.expect("validated above").as_f64();
            let (p, cache_c) = model.classifier.forward(&e_c)?;
            let (cls, dp) = binary_cross_entropy(p[0], label)?;
            classification += cls / n_source;
            if let Some(acc) = grads.as_deref_mut() {
                let d = model.classifier.backward_acc(&cache_c, &[dp / n_source], &mut acc.classifier)?;
                for (dst, src) in d_ec.iter_mut().zip(&d) {
                    *dst += src;
                }
            }
        }

        // Domain confusion over the target half, through the frozen
        // domain discriminator.
        if trial.domain == Domain::Target {
            let (s_d, cache_dd) = model.domain_disc.forward(&e_v)?;
            domain_term += sign_domain * s_d[0] / n_target;
            if grads.is_some() && weights.alpha != 0.0 {
                let d = model
                    .domain_disc
                    .backward_input(&cache_dd, &[weights.alpha * sign_domain / n_target])?;
                for (dst, src) in d_ev.iter_mut().zip(&d) {
                    *dst += src;
                }
            }
        }

        // Side confusion over the left partition, through the frozen
        // side discriminator.
        if trial.side == Side::Left {
            let (s_s, cache_sd) = model.side_disc.forward(&e_c)?;
            side_term += sign_side * s_s[0] / n_left;
            if grads.is_some() && weights.beta != 0.0 {
                let d = model
                    .side_disc
                    .backward_input(&cache_sd, &[weights.beta * sign_side / n_left])?;
                for (dst, src) in d_ec.iter_mut().zip(&d) {
                    *dst += src;
                }
            }
        }

        if let Some(acc) = grads.as_deref_mut() {
            model.pure_encoder.backward_acc(&cache_pe, &d_ec, &mut acc.pure_encoder)?;
            model.variance_encoder.backward_acc(&cache_ve, &d_ev, &mut acc.variance_encoder)?;
        }
    }

    Ok(DaeLosses {
        classification,
        reconstruction,
        domain_term,
        side_term,
        total: weights.alpha * domain_term
            + weights.beta * side_term
            + classification
            + reconstruction,
    })
}

/// Pre-training objective `L_cls + L_ae` with the decoder reading a
/// duplicated class embedding, since the variance encoder is not yet
/// meaningful. Trains the pure encoder, the classifier, and the decoder.
pub fn pretrain_loss_grads(
    model: &DsudaModel,
    batch: &Batch,
    mut grads: Option<&mut ModelGrads>,
) -> Result<(f64, f64)> {
    if batch.source.is_empty() {
        return Err(Error::Train("pre-training needs a non-empty source batch".into()));
    }
    batch.check_shapes(model)?;
    if !batch.target.is_empty() {
        return Err(Error::Train("pre-training batches are source-only".into()));
    }
    let n = batch.source.len() as f64;
    let latent = model.shape.latent;
    let mut classification = 0.0;
    let mut reconstruction = 0.0;
    for trial in &batch.source {
        let label = trial.label.expect("validated above").as_f64();
        let (e_c, cache_pe) = model.pure_encoder.forward(&trial.samples)?;
        let mut d_ec = vec![0.0; latent];

        let (p, cache_c) = model.classifier.forward(&e_c)?;
        let (cls, dp) = binary_cross_entropy(p[0], label)?;
        classification += cls / n;

        let mut z = e_c.clone();
        z.extend_from_slice(&e_c);
        let (recon, cache_de) = model.decoder.forward(&z)?;
        let (ae, mut d_recon) = mse(&recon, &trial.samples)?;
        reconstruction += ae / n;

        if let Some(acc) = grads.as_deref_mut() {
            let d = model.classifier.backward_acc(&cache_c, &[dp / n], &mut acc.classifier)?;
            for (dst, src) in d_ec.iter_mut().zip(&d) {
                *dst += src;
            }
            for v in &mut d_recon {
                *v /= n;
            }
            let d_z = model.decoder.backward_acc(&cache_de, &d_recon, &mut acc.decoder)?;
            // Both halves of the duplicated embedding feed the same encoder.
            for (dst, (a, b)) in d_ec.iter_mut().zip(d_z[..latent].iter().zip(&d_z[latent..])) {
                *dst += a + b;
            }
            model.pure_encoder.backward_acc(&cache_pe, &d_ec, &mut acc.pure_encoder)?;
        }
    }
    Ok((classification, reconstruction))
}
