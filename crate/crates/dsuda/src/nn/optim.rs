//! Parameter updates: bias-corrected Adam and plain SGD.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::net::{DenseNet, GradientSet};

/// First/second-moment accumulators for Adam, shape-congruent with the net.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: GradientSet,
    pub v: GradientSet,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(net: &DenseNet) -> Self {
        AdamState {
            m: GradientSet::zeros_like(net),
            v: GradientSet::zeros_like(net),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update.
///
/// A gradient set that is identically zero leaves parameters and state
/// untouched. Non-finite gradients abort the update.
pub fn adam_step(
    net: &mut DenseNet,
    grads: &GradientSet,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    check_update(net, grads, lr)?;
    if !state.m.matches(net) || !state.v.matches(net) {
        return Err(Error::Shape("adam state does not match net".into()));
    }
    if grads.is_zero() {
        return Ok(());
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (li, layer) in net.layers.iter_mut().enumerate() {
        let g = &grads.layers[li];
        let m = &mut state.m.layers[li];
        let v = &mut state.v.layers[li];
        for (i, w) in layer.weights.iter_mut().enumerate() {
            let gi = g.weights[i];
            m.weights[i] = state.beta1 * m.weights[i] + (1.0 - state.beta1) * gi;
            v.weights[i] = state.beta2 * v.weights[i] + (1.0 - state.beta2) * gi * gi;
            let m_hat = m.weights[i] / bc1;
            let v_hat = v.weights[i] / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
        for (i, b) in layer.bias.iter_mut().enumerate() {
            let gi = g.bias[i];
            m.bias[i] = state.beta1 * m.bias[i] + (1.0 - state.beta1) * gi;
            v.bias[i] = state.beta2 * v.bias[i] + (1.0 - state.beta2) * gi * gi;
            let m_hat = m.bias[i] / bc1;
            let v_hat = v.bias[i] / bc2;
            *b -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

/// One plain gradient-descent update.
pub fn sgd_step(net: &mut DenseNet, grads: &GradientSet, lr: f64) -> Result<()> {
    check_update(net, grads, lr)?;
    for (li, layer) in net.layers.iter_mut().enumerate() {
        let g = &grads.layers[li];
        for (w, gi) in layer.weights.iter_mut().zip(&g.weights) {
            *w -= lr * gi;
        }
        for (b, gi) in layer.bias.iter_mut().zip(&g.bias) {
            *b -= lr * gi;
        }
    }
    Ok(())
}

fn check_update(net: &DenseNet, grads: &GradientSet, lr: f64) -> Result<()> {
    if !grads.matches(net) {
        return Err(Error::Shape("gradient set does not match net".into()));
    }
    if lr <= 0.0 || !lr.is_finite() {
        return Err(Error::Value(format!("learning rate must be positive, got {lr}")));
    }
    if !grads.is_finite() {
        return Err(Error::Value(
            "non-finite gradient encountered; aborting update".into(),
        ));
    }
    Ok(())
}

/// Optimizer selection, one instance per network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(AdamState),
    Sgd,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, net: &DenseNet) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(AdamState::new(net)),
            OptimizerKind::Sgd => Optimizer::Sgd,
        }
    }

    pub fn step(&mut self, net: &mut DenseNet, grads: &GradientSet, lr: f64) -> Result<()> {
        match self {
            Optimizer::Adam(state) => adam_step(net, grads, state, lr),
            Optimizer::Sgd => sgd_step(net, grads, lr),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::net::{Activation, DenseLayer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_net(w: f64) -> DenseNet {
        DenseNet::new(vec![DenseLayer::from_parts(
            1,
            1,
            vec![w],
            vec![0.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    fn scalar_grads(net: &DenseNet, g: f64) -> GradientSet {
        let mut grads = GradientSet::zeros_like(net);
        grads.layers[0].weights[0] = g;
        grads
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged_for_any_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut net = DenseNet::two_layer(3, 4, 2, Activation::Tanh, &mut rng);
        let mut state = AdamState::new(&net);
        // Dirty the state with a few real steps first.
        for _ in 0..3 {
            let mut g = GradientSet::zeros_like(&net);
            for layer in &mut g.layers {
                for w in &mut layer.weights {
                    *w = 0.17;
                }
            }
            adam_step(&mut net, &g, &mut state, 1e-3).unwrap();
        }
        let before = net.params_flat();
        let zero = GradientSet::zeros_like(&net);
        adam_step(&mut net, &zero, &mut state, 1e-3).unwrap();
        assert_eq!(net.params_flat(), before);
    }

    #[test]
    fn first_step_moves_by_about_lr_times_sign() {
        for g in [0.3, -2.0, 1e-3] {
            let mut net = scalar_net(1.0);
            let mut state = AdamState::new(&net);
            let grads = scalar_grads(&net, g);
            let lr = 1e-3;
            adam_step(&mut net, &grads, &mut state, lr).unwrap();
            let delta = net.layers[0].weights[0] - 1.0;
            assert!(delta.signum() == -g.signum(), "delta {delta} vs gradient {g}");
            let magnitude = delta.abs();
            assert!(
                magnitude >= lr * (1.0 - 1e-3) && magnitude <= lr,
                "first-step |delta| = {magnitude}"
            );
            assert_eq!(state.step, 1);
        }
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut net = scalar_net(0.5);
        let mut state = AdamState::new(&net);
        let mut prev = 0.5;
        for _ in 0..2 {
            let grads = scalar_grads(&net, 1.0);
            adam_step(&mut net, &grads, &mut state, 1e-3).unwrap();
            let now = net.layers[0].weights[0];
            assert!(now < prev, "parameter should keep moving against the gradient");
            prev = now;
        }
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let mut net = scalar_net(1.0);
        let mut state = AdamState::new(&net);
        let grads = scalar_grads(&net, f64::NAN);
        assert!(adam_step(&mut net, &grads, &mut state, 1e-3).is_err());
        let grads = scalar_grads(&net, f64::INFINITY);
        assert!(sgd_step(&mut net, &grads, 1e-3).is_err());
        assert_eq!(net.layers[0].weights[0], 1.0);
    }

    #[test]
    fn sgd_applies_plain_descent() {
        let mut net = scalar_net(1.0);
        let grads = scalar_grads(&net, 2.0);
        sgd_step(&mut net, &grads, 0.1).unwrap();
        assert!((net.layers[0].weights[0] - 0.8).abs() < 1e-15);
    }
}
