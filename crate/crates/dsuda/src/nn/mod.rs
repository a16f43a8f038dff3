//! Minimal dense-network engine: forward/backward passes, loss primitives,
//! Adam/SGD updates, and a finite-difference gradient-check oracle.

pub mod gradcheck;
pub mod loss;
pub mod net;
pub mod optim;

pub use gradcheck::grad_check;
pub use loss::{binary_cross_entropy, mse, BCE_CLIP};
pub use net::{Activation, DenseLayer, DenseNet, ForwardCache, GradientSet, LayerGrads};
pub use optim::{adam_step, sgd_step, AdamState, Optimizer, OptimizerKind};
