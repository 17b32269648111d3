use rand::Rng;

use crate::airlink::effective_channel;
use crate::channel::{cscg, db_to_linear, realize_channels, ChannelModel, ChannelParams};
use crate::error::{invalid, Result};
use num_complex::Complex64;

/// Kernels further than this many bandwidths away are skipped.
const KDE_CUTOFF: f64 = 8.0;

/// Channel-energy priors for the Bayesian and GLRT detectors.
///
/// `v0 = |h0|^2` is exponential with mean `sigma2_sr`. `v1 = |h1|^2` has no
/// convenient closed form, so it is carried as a Monte-Carlo sample set
/// drawn from the channel model (all quantities in the reader's effective,
/// SNR-scaled units).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel {
    pub sigma2_sr: f64,
    pub xi_sigma2_st_tr: f64,
    /// Upper bound on quadrature nodes for the H0 marginal.
    pub quadrature_nodes: usize,
    v1_samples: Vec<f64>,
    bandwidth: f64,
}

impl PriorModel {
    pub const DEFAULT_QUADRATURE_NODES: usize = 1024;
    pub const DEFAULT_SAMPLES: usize = 1 << 14;

    pub fn new(sigma2_sr: f64, xi_sigma2_st_tr: f64, mut v1_samples: Vec<f64>) -> Result<Self> {
        if !(sigma2_sr > 0.0) || !(xi_sigma2_st_tr >= 0.0) {
            return Err(invalid("prior variances must be positive"));
        }
        if v1_samples.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("v1 samples must be finite and non-negative"));
        }
        v1_samples.sort_by(f64::total_cmp);
        let bandwidth = silverman_bandwidth(&v1_samples);
        Ok(Self {
            sigma2_sr,
            xi_sigma2_st_tr,
            quadrature_nodes: Self::DEFAULT_QUADRATURE_NODES,
            v1_samples,
            bandwidth,
        })
    }

    /// Rayleigh priors: `v1 = |h_sr + g|^2` with `h_sr ~ CN(0, sigma2_sr)` and
    /// `g` the product of a `CN(0, xi_sigma2_st_tr)` and a `CN(0, 1)` gain.
    pub fn sample_rayleigh<R: Rng + ?Sized>(
        sigma2_sr: f64,
        xi_sigma2_st_tr: f64,
        count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if !(sigma2_sr > 0.0) || !(xi_sigma2_st_tr >= 0.0) {
            return Err(invalid("prior variances must be positive"));
        }
        let samples = (0..count)
            .map(|_| {
                let h_sr = cscg(sigma2_sr, rng);
                let g = if xi_sigma2_st_tr > 0.0 {
                    cscg(xi_sigma2_st_tr, rng) * cscg(1.0, rng)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                (h_sr + g).norm_sqr()
            })
            .collect();
        Self::new(sigma2_sr, xi_sigma2_st_tr, samples)
    }

    /// Priors matching what the reader sees for a given SNR, `eta` and `xi`.
    ///
    /// `v1` is drawn from the configured fading family (Rician included);
    /// `v0` keeps the exponential form with the effective direct-link mean.
    pub fn for_link<R: Rng + ?Sized>(
        params: &ChannelParams,
        snr_db: f64,
        eta: f64,
        xi: f64,
        count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        params.validate()?;
        let gamma = Complex64::new(xi.sqrt(), 0.0);
        let beta = db_to_linear(snr_db);
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let chan = realize_channels(params, gamma, rng)?;
            samples.push(effective_channel(&chan, gamma, snr_db, eta).h1.norm_sqr());
        }
        let direct = match params.model {
            ChannelModel::Rayleigh => params.sigma2_sr,
            ChannelModel::Rician { .. } => params.direct_power(),
        };
        let backscatter = eta * xi * params.link_power(params.sigma2_st) * params.link_power(params.sigma2_tr);
        Self::new(beta * direct, beta * backscatter, samples)
    }

    pub fn v1_samples(&self) -> &[f64] {
        &self.v1_samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `ln` of the exponential `v0` density.
    pub fn log_p0(&self, v: f64) -> f64 {
        -self.sigma2_sr.ln() - v / self.sigma2_sr
    }

    /// `ln` of the Gaussian kernel density estimate of `v1` at `v`.
    pub fn log_p1_kde(&self, v: f64) -> f64 {
        let h = self.bandwidth;
        if self.v1_samples.is_empty() || !(h > 0.0) {
            return f64::NEG_INFINITY;
        }
        let lo = self.v1_samples.partition_point(|&x| x < v - KDE_CUTOFF * h);
        let hi = self.v1_samples.partition_point(|&x| x <= v + KDE_CUTOFF * h);
        let inv_h = 1.0 / h;
        let sum: f64 = self.v1_samples[lo..hi]
            .iter()
            .map(|&x| {
                let u = (v - x) * inv_h;
                (-0.5 * u * u).exp()
            })
            .sum();
        let norm = self.v1_samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt();
        (sum / norm).ln()
    }
}

/// `0.9 min(sd, IQR/1.34) n^(-1/5)` on sorted data.
fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n < 2 {
        return 0.0;
    }
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let q = |p: f64| {
        let pos = p * (n - 1) as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if i + 1 < n {
            sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
        } else {
            sorted[n - 1]
        }
    };
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (n as f64).powf(-0.2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn samples_are_sorted_and_validated() {
        let p = PriorModel::new(1.0, 1.0, vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(p.v1_samples(), &[1.0, 2.0, 3.0]);
        assert!(PriorModel::new(1.0, 1.0, vec![-1.0]).is_err());
        assert!(PriorModel::new(0.0, 1.0, vec![1.0]).is_err());
    }

    #[test]
    fn kde_integrates_to_one() {
        let p = PriorModel::sample_rayleigh(1.0, 1.0, 4096, &mut rng_from_seed(3)).unwrap();
        let h = 0.01;
        let total: f64 = (0..4000).map(|i| (p.log_p1_kde(-5.0 + i as f64 * h)).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn rayleigh_prior_mean() {
        // E[v1] = sigma2_sr + xi_sigma2_st_tr for independent zero-mean gains.
        let p = PriorModel::sample_rayleigh(2.0, 0.5, 200_000, &mut rng_from_seed(4)).unwrap();
        let m = p.v1_samples().iter().sum::<f64>() / 200_000.0;
        assert!((m - 2.5).abs() < 0.03, "{m}");
    }

    #[test]
    fn link_prior_scales_with_snr() {
        let p = PriorModel::for_link(&ChannelParams::default(), 10.0, 0.5, 1.0, 100_000, &mut rng_from_seed(5))
            .unwrap();
        assert_eq!(p.sigma2_sr, 10.0);
        assert!((p.xi_sigma2_st_tr - 5.0).abs() < 1e-12);
        let m = p.v1_samples().iter().sum::<f64>() / 100_000.0;
        assert!((m - 15.0).abs() < 0.3, "{m}");
    }
}
