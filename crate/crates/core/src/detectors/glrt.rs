use super::{DetectorVerdict, PriorModel};
use crate::error::{invalid, Result};

/// Floor applied to `v*` before evaluating densities.
pub const EPS_V: f64 = 1e-9;

/// Clamped ML estimate of the channel energy: `(z/(N p_s) - sigma2_w/p_s)+`.
pub fn glrt_estimate(z: f64, n: usize, p_s: f64, sigma2_w: f64) -> f64 {
    (z / (n as f64 * p_s) - sigma2_w / p_s).max(0.0)
}

/// GLRT: plug `v*` into both channel-energy priors and pick the larger density.
pub fn glrt_detect(z: f64, prior: &PriorModel, p_s: f64, sigma2_w: f64, n: usize) -> Result<DetectorVerdict> {
    if prior.v1_samples().is_empty() {
        return Err(invalid("GLRT needs a non-empty v1 sample set"));
    }
    if n == 0 {
        return Err(invalid("samples per bit must be >= 1"));
    }
    let v = glrt_estimate(z, n, p_s, sigma2_w).max(EPS_V);
    let stat = prior.log_p1_kde(v) - prior.log_p0(v);
    Ok(DetectorVerdict::decide(stat >= 0.0, stat, 0.0))
}
