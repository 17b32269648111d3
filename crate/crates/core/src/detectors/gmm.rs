use rand::Rng;

use super::DetectorVerdict;
use crate::error::{invalid, Result};

/// Component variance below which a fit is treated as collapsed.
pub const VARIANCE_FLOOR: f64 = 1e-12;
/// Re-seeded attempts after the initial one.
pub const MAX_RESTARTS: usize = 3;

/// Two-component 1-D Gaussian mixture fitted by EM.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variances: [f64; 2],
    /// Log-likelihood after every E-step.
    pub log_likelihood: Vec<f64>,
    /// Mixture weight sums observed after every M-step.
    pub weight_sums: Vec<f64>,
    /// Component mapped to tag bit 1.
    pub reflecting: usize,
    pub restarts: usize,
}

impl GmmFit {
    /// Posterior of each component for energy `x`.
    pub fn responsibilities(&self, x: f64) -> [f64; 2] {
        let l = [0, 1].map(|k| log_weighted_density(x, self.weights[k], self.means[k], self.variances[k]));
        let m = l[0].max(l[1]);
        let e = [(l[0] - m).exp(), (l[1] - m).exp()];
        let s = e[0] + e[1];
        [e[0] / s, e[1] / s]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmOutcome {
    pub verdicts: Vec<DetectorVerdict>,
    /// `None` when every attempt collapsed and all verdicts abstain.
    pub fit: Option<GmmFit>,
}

#[inline]
fn log_weighted_density(x: f64, w: f64, mu: f64, var: f64) -> f64 {
    let d = x - mu;
    w.ln() - 0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * d * d / var
}

enum Attempt {
    Converged(GmmFit),
    Collapsed,
}

fn fit_once(x: &[f64], init_means: [f64; 2], init_var: f64, max_iter: usize, tol: f64) -> Attempt {
    let n = x.len();
    let mut weights = [0.5, 0.5];
    let mut means = init_means;
    let mut variances = [init_var; 2];
    let mut ll_history = Vec::new();
    let mut weight_sums = Vec::new();
    let mut resp = vec![[0.0f64; 2]; n];

    if !(init_var >= VARIANCE_FLOOR) {
        return Attempt::Collapsed;
    }

    for _ in 0..max_iter.max(1) {
        // E-step.
        let mut ll = 0.0;
        for (r, &xi) in resp.iter_mut().zip(x) {
            let l0 = log_weighted_density(xi, weights[0], means[0], variances[0]);
            let l1 = log_weighted_density(xi, weights[1], means[1], variances[1]);
            let m = l0.max(l1);
            let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
            let s = e0 + e1;
            ll += m + s.ln();
            *r = [e0 / s, e1 / s];
        }
        let converged = ll_history.last().is_some_and(|&prev: &f64| (ll - prev).abs() < tol);
        ll_history.push(ll);
        if converged {
            break;
        }

        // M-step.
        for k in 0..2 {
            let nk: f64 = resp.iter().map(|r| r[k]).sum();
            if !(nk > 0.0) {
                return Attempt::Collapsed;
            }
            let mu = resp.iter().zip(x).map(|(r, &xi)| r[k] * xi).sum::<f64>() / nk;
            let var = resp.iter().zip(x).map(|(r, &xi)| r[k] * (xi - mu).powi(2)).sum::<f64>() / nk;
            if !(var >= VARIANCE_FLOOR) {
                return Attempt::Collapsed;
            }
            weights[k] = nk / n as f64;
            means[k] = mu;
            variances[k] = var;
        }
        weight_sums.push(weights[0] + weights[1]);
    }

    Attempt::Converged(GmmFit {
        weights,
        means,
        variances,
        log_likelihood: ll_history,
        weight_sums,
        reflecting: 1,
        restarts: 0,
    })
}

/// Clusters symbol energies with a 2-component GMM and labels the clusters
/// using pilots of known value.
///
/// The first attempt seeds the means at the lower/upper quartiles; on
/// variance collapse it restarts from random data points, up to
/// [`MAX_RESTARTS`] times, and then abstains on every energy.
pub fn gmm_em_detect<R: Rng + ?Sized>(
    energies: &[f64],
    labeled: &[(f64, u8)],
    max_iter: usize,
    tol: f64,
    rng: &mut R,
) -> Result<GmmOutcome> {
    if energies.is_empty() {
        return Err(invalid("GMM detector needs at least one energy"));
    }
    if labeled.is_empty() {
        return Err(invalid("GMM detector needs labeled pilots for cluster-bit mapping"));
    }

    let n = energies.len() as f64;
    let mean = energies.iter().sum::<f64>() / n;
    let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quartile = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];

    let mut init = [quartile(0.25), quartile(0.75)];
    let mut fit = None;
    for attempt in 0..=MAX_RESTARTS {
        if attempt > 0 {
            let a = energies[rng.random_range(0..energies.len())];
            let b = energies[rng.random_range(0..energies.len())];
            init = [a.min(b), a.max(b)];
        }
        if let Attempt::Converged(mut f) = fit_once(energies, init, var, max_iter, tol) {
            f.restarts = attempt;
            fit = Some(f);
            break;
        }
    }

    let Some(mut fit) = fit else {
        return Ok(GmmOutcome {
            verdicts: vec![DetectorVerdict::abstain(f64::NAN, 0.5); energies.len()],
            fit: None,
        });
    };

    let mut score = [0.0f64; 2];
    for &(x, bit) in labeled {
        let r = fit.responsibilities(x);
        let sign = if bit == 1 { 1.0 } else { -1.0 };
        score[0] += sign * r[0];
        score[1] += sign * r[1];
    }
    fit.reflecting = if score[1] >= score[0] { 1 } else { 0 };

    let verdicts = energies
        .iter()
        .map(|&x| {
            let p = fit.responsibilities(x)[fit.reflecting];
            DetectorVerdict::decide(p >= 0.5, p, 0.5)
        })
        .collect();
    Ok(GmmOutcome { verdicts, fit: Some(fit) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use rand_distr::{Distribution, Normal};

    fn mixture(seed: u64) -> (Vec<f64>, Vec<u8>) {
        let mut rng = rng_from_seed(seed);
        let lo = Normal::new(1.0, 0.1).unwrap();
        let hi = Normal::new(5.0, 0.1).unwrap();
        let mut e = Vec::new();
        let mut bits = Vec::new();
        for i in 0..400 {
            if i % 3 == 0 {
                e.push(hi.sample(&mut rng));
                bits.push(1);
            } else {
                e.push(lo.sample(&mut rng));
                bits.push(0);
            }
        }
        (e, bits)
    }

    #[test]
    fn separated_mixture_is_recovered() {
        let (e, bits) = mixture(1);
        let out = gmm_em_detect(&e, &[(5.0, 1)], 1000, 1e-9, &mut rng_from_seed(2)).unwrap();
        let fit = out.fit.unwrap();
        let mut means = fit.means;
        means.sort_by(f64::total_cmp);
        assert!((means[0] - 1.0).abs() < 0.1 && (means[1] - 5.0).abs() < 0.1, "{means:?}");
        for (v, b) in out.verdicts.iter().zip(bits) {
            assert_eq!(v.bit, b);
        }
    }

    #[test]
    fn absorbing_pilot_maps_the_other_cluster() {
        let (e, bits) = mixture(3);
        let out = gmm_em_detect(&e, &[(1.0, 0)], 1000, 1e-9, &mut rng_from_seed(4)).unwrap();
        for (v, b) in out.verdicts.iter().zip(bits) {
            assert_eq!(v.bit, b);
        }
    }

    #[test]
    fn repeated_value_abstains() {
        let out = gmm_em_detect(&[2.0; 50], &[(2.0, 1)], 1000, 1e-9, &mut rng_from_seed(5)).unwrap();
        assert!(out.fit.is_none());
        assert!(out.verdicts.iter().all(|v| v.abstained));
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let mut rng = rng_from_seed(6);
        let a = Normal::new(2.0, 0.6).unwrap();
        let b = Normal::new(3.0, 0.4).unwrap();
        let e: Vec<f64> = (0..500).map(|i| if i % 2 == 0 { a.sample(&mut rng) } else { b.sample(&mut rng) }).collect();
        let out = gmm_em_detect(&e, &[(3.0, 1)], 1000, 1e-12, &mut rng).unwrap();
        let fit = out.fit.unwrap();
        assert!(fit.log_likelihood.len() > 3);
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        for s in fit.weight_sums {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_empty_inputs() {
        let mut rng = rng_from_seed(0);
        assert!(gmm_em_detect(&[], &[(1.0, 1)], 10, 1e-6, &mut rng).is_err());
        assert!(gmm_em_detect(&[1.0, 2.0], &[], 10, 1e-6, &mut rng).is_err());
    }
}
