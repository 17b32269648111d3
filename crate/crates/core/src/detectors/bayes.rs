use super::{DetectorVerdict, PriorModel};
use crate::error::{invalid, AmbcError, Result};

/// Node count of the first quadrature pass; doubled until convergence.
const START_NODES: usize = 64;
/// Accepted change of the log-marginal between two node doublings.
const CONVERGENCE_TOL: f64 = 1e-6;
/// Half-width of the exp-sinh abscissa range.
const HALF_RANGE: f64 = 3.6;

/// Log marginal likelihoods of one energy observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMarginals {
    pub l0: f64,
    pub l1: f64,
    /// Quadrature nodes used for `l0`.
    pub nodes: usize,
}

/// `ln Pr(y | v) = -N ln(pi t) - z / t` with `t = v p_s + sigma2_w`.
#[inline]
fn log_conditional(v: f64, z: f64, n: f64, p_s: f64, sigma2_w: f64) -> f64 {
    let t = v * p_s + sigma2_w;
    -n * (std::f64::consts::PI * t).ln() - z / t
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Trapezoid rule in `t` after `v = c exp(pi/2 sinh t)`, all in the log domain.
fn exp_sinh_log_integral(log_f: impl Fn(f64) -> f64, center: f64, nodes: usize) -> f64 {
    let step = 2.0 * HALF_RANGE / nodes as f64;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let terms = (0..=nodes).map(|k| {
        let t = -HALF_RANGE + k as f64 * step;
        let v = center * (half_pi * t.sinh()).exp();
        if v == 0.0 || !v.is_finite() {
            return f64::NEG_INFINITY;
        }
        log_f(v) + (v * half_pi * t.cosh()).ln()
    });
    let terms: Vec<f64> = terms.collect();
    log_sum_exp(terms.iter().copied()) + step.ln()
}

fn h0_integrand(z: f64, prior: &PriorModel, p_s: f64, sigma2_w: f64, n: usize) -> (impl Fn(f64) -> f64 + '_, f64) {
    let nf = n as f64;
    let v_hat = (z / (nf * p_s) - sigma2_w / p_s).max(0.0);
    let center = v_hat.max(sigma2_w / (nf * p_s)).max(1e-12 * prior.sigma2_sr);
    let log_f = move |v: f64| log_conditional(v, z, nf, p_s, sigma2_w) + prior.log_p0(v);
    (log_f, center)
}

/// The H0 quadrature at a fixed node count, without the convergence loop.
pub fn h0_log_marginal_with_nodes(z: f64, prior: &PriorModel, p_s: f64, sigma2_w: f64, n: usize, nodes: usize) -> f64 {
    let (log_f, center) = h0_integrand(z, prior, p_s, sigma2_w, n);
    exp_sinh_log_integral(log_f, center, nodes.max(2))
}

/// `ln ∫ Pr(y|v0) Pr(v0) dv0` against the exponential `v0` prior.
///
/// Returns the converged value and the node count, or a numerical error if
/// doubling up to `prior.quadrature_nodes` never settles within `1e-6`.
pub fn h0_log_marginal(z: f64, prior: &PriorModel, p_s: f64, sigma2_w: f64, n: usize) -> Result<(f64, usize)> {
    let (log_f, center) = h0_integrand(z, prior, p_s, sigma2_w, n);

    let mut nodes = START_NODES;
    let mut prev = exp_sinh_log_integral(&log_f, center, nodes);
    let mut last_change = f64::INFINITY;
    while nodes * 2 <= prior.quadrature_nodes.max(START_NODES) {
        nodes *= 2;
        let cur = exp_sinh_log_integral(&log_f, center, nodes);
        last_change = (cur - prev).abs();
        prev = cur;
        if last_change < CONVERGENCE_TOL {
            return Ok((cur, nodes));
        }
    }
    Err(AmbcError::Numerical(format!(
        "H0 marginal did not converge: last change {last_change:.3e} at {nodes} nodes (z = {z})"
    )))
}

/// `ln mean_k Pr(y | v1_k)` over the prior's Monte-Carlo `v1` samples.
pub fn h1_log_marginal(z: f64, prior: &PriorModel, p_s: f64, sigma2_w: f64, n: usize) -> Result<f64> {
    let samples = prior.v1_samples();
    if samples.is_empty() {
        return Err(invalid("Bayesian detector needs a non-empty v1 sample set"));
    }
    let nf = n as f64;
    let terms = samples.iter().map(|&v| log_conditional(v, z, nf, p_s, sigma2_w));
    Ok(log_sum_exp(terms) - (samples.len() as f64).ln())
}

pub fn bayes_log_marginals(z: f64, prior: &PriorModel, p_s: f64, sigma2_w: f64, n: usize) -> Result<LogMarginals> {
    if n == 0 {
        return Err(invalid("samples per bit must be >= 1"));
    }
    let l1 = h1_log_marginal(z, prior, p_s, sigma2_w, n)?;
    let (l0, nodes) = h0_log_marginal(z, prior, p_s, sigma2_w, n)?;
    Ok(LogMarginals { l0, l1, nodes })
}

/// Bayesian test: reflecting iff `L1 >= L0`. Quadrature failure abstains.
pub fn bayesian_detect(z: f64, prior: &PriorModel, p_s: f64, sigma2_w: f64, n: usize) -> Result<DetectorVerdict> {
    match bayes_log_marginals(z, prior, p_s, sigma2_w, n) {
        Ok(m) => {
            let stat = m.l1 - m.l0;
            Ok(DetectorVerdict::decide(stat >= 0.0, stat, 0.0))
        }
        Err(AmbcError::Numerical(_)) => Ok(DetectorVerdict::abstain(f64::NAN, 0.0)),
        Err(e) => Err(e),
    }
}
