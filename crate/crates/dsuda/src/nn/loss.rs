//! Scalar loss primitives with value + gradient in one call.

use crate::error::{Error, Result};

/// Probabilities are clipped into `[BCE_CLIP, 1 - BCE_CLIP]` before the log,
/// so saturated sigmoids cannot produce infinities.
pub const BCE_CLIP: f64 = 1e-7;

/// Binary cross-entropy of a predicted probability against a 0/1 label.
///
/// Returns `(loss, d loss / d p)` evaluated at the clipped probability.
pub fn binary_cross_entropy(p: f64, y: f64) -> Result<(f64, f64)> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::Value(format!("binary label must be 0 or 1, got {y}")));
    }
    if !p.is_finite() {
        return Err(Error::Value(format!("probability must be finite, got {p}")));
    }
    let p = p.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
    let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    let dp = -y / p + (1.0 - y) / (1.0 - p);
    Ok((loss, dp))
}

/// Mean squared error between two equal-length vectors.
///
/// Returns `(loss, d loss / d a)` with `da = 2 (a - b) / n`.
pub fn mse(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "mse over vectors of different lengths: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Shape("mse over empty vectors".into()));
    }
    let n = a.len() as f64;
    let mut loss = 0.0;
    let mut da = Vec::with_capacity(a.len());
    for (&ai, &bi) in a.iter().zip(b) {
        let diff = ai - bi;
        loss += diff * diff;
        da.push(2.0 * diff / n);
    }
    Ok((loss / n, da))
}
