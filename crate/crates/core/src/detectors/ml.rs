use super::{DetectorVerdict, HypothesisStats};

/// `N d0 d1 / (d1 - d0) * ln(d1 / d0)`: the energy at which both likelihoods agree.
pub fn ml_threshold(stats: &HypothesisStats) -> f64 {
    let (d0, d1) = (stats.delta2_0, stats.delta2_1);
    stats.n as f64 * d0 * d1 / (d1 - d0) * (d1 / d0).ln()
}

/// `ln p(y|H1) - ln p(y|H0)` for `y ~ CN(0, d_i I_N)` as a function of `z = |y|^2`.
pub fn ml_log_likelihood_ratio(z: f64, stats: &HypothesisStats) -> f64 {
    let (d0, d1) = (stats.delta2_0, stats.delta2_1);
    z * (d1 - d0) / (d0 * d1) - stats.n as f64 * (d1 / d0).ln()
}

/// Maximum-likelihood energy test on `z = |y|^2` of one data symbol.
///
/// With `d0 < d1` the tag is declared reflecting when `z >= threshold`,
/// otherwise when `z < threshold`.
pub fn ml_detect(z: f64, stats: &HypothesisStats) -> DetectorVerdict {
    if stats.is_degenerate() {
        return DetectorVerdict::abstain(z, f64::NAN);
    }
    let theta = ml_threshold(stats);
    let bit = if stats.delta2_0 < stats.delta2_1 { z >= theta } else { z < theta };
    DetectorVerdict::decide(bit, z, theta)
}
