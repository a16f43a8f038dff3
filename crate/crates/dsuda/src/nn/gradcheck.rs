//! Finite-difference verification of analytic gradients.

use crate::nn::net::{DenseNet, GradientSet};

/// Floor for the relative-error denominator.
pub const GRAD_CHECK_FLOOR: f64 = 1e-12;

/// Compare `analytic` gradients against central finite differences of `loss`
/// over every parameter of `net`.
///
/// Returns the maximum of `|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)`.
/// `eps` must lie in `[1e-7, 1e-3]`.
pub fn grad_check<F>(net: &DenseNet, analytic: &GradientSet, mut loss: F, eps: f64) -> f64
where
    F: FnMut(&DenseNet) -> f64,
{
    assert!(
        (1e-7..=1e-3).contains(&eps),
        "finite-difference step {eps} outside [1e-7, 1e-3]"
    );
    assert!(analytic.matches(net), "gradient set does not match net");

    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for li in 0..net.layers.len() {
        for wi in 0..net.layers[li].weights.len() {
            let a = analytic.layers[li].weights[wi];
            let original = probe.layers[li].weights[wi];
            probe.layers[li].weights[wi] = original + eps;
            let up = loss(&probe);
            probe.layers[li].weights[wi] = original - eps;
            let down = loss(&probe);
            probe.layers[li].weights[wi] = original;
            worst = worst.max(relative_error(a, (up - down) / (2.0 * eps)));
        }
        for bi in 0..net.layers[li].bias.len() {
            let a = analytic.layers[li].bias[bi];
            let original = probe.layers[li].bias[bi];
            probe.layers[li].bias[bi] = original + eps;
            let up = loss(&probe);
            probe.layers[li].bias[bi] = original - eps;
            let down = loss(&probe);
            probe.layers[li].bias[bi] = original;
            worst = worst.max(relative_error(a, (up - down) / (2.0 * eps)));
        }
    }
    worst
}

#[inline]
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}
