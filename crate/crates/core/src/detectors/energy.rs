use super::{DetectorVerdict, HypothesisStats};

/// Gaussian-approximation threshold `(d0 g1 + d1 g0) / (g0 + g1)` with `g_i = sqrt(gamma2_i)`.
pub fn ed_threshold(stats: &HypothesisStats) -> f64 {
    let g0 = stats.gamma2_0.sqrt();
    let g1 = stats.gamma2_1.sqrt();
    (stats.delta2_0 * g1 + stats.delta2_1 * g0) / (g0 + g1)
}

/// Energy detector on the normalized energy `e = |y|^2 / N`.
///
/// The reflecting hypothesis is taken on the side of `delta2_1`; ties go to it.
pub fn ed_detect(e: f64, stats: &HypothesisStats) -> DetectorVerdict {
    let gsum = stats.gamma2_0.sqrt() + stats.gamma2_1.sqrt();
    if stats.is_degenerate() || !(gsum > 0.0) {
        return DetectorVerdict::abstain(e, f64::NAN);
    }
    let theta = ed_threshold(stats);
    let bit = if stats.delta2_1 > stats.delta2_0 { e >= theta } else { e <= theta };
    DetectorVerdict::decide(bit, e, theta)
}
