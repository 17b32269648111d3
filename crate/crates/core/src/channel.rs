//! Fading gains and link-budget helpers.
//!
//! The three links of the tag geometry are source-reader (`h_sr`),
//! source-tag (`h_st`) and tag-reader (`h_tr`). Under the "no backscatter"
//! hypothesis the reader sees `h0 = h_sr`; when the tag reflects with
//! coefficient `gamma` it sees `h1 = h_sr + gamma * h_st * h_tr`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

/// Speed of light used for wavelength conversions (m/s).
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Small-scale fading family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelModel {
    Rayleigh,
    /// Rician fading with a deterministic unit line-of-sight term.
    Rician { kappa: f64 },
}

/// Per-link NLoS variances plus the fading family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub sigma2_sr: f64,
    pub sigma2_st: f64,
    pub sigma2_tr: f64,
    pub model: ChannelModel,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            sigma2_sr: 1.0,
            sigma2_st: 1.0,
            sigma2_tr: 1.0,
            model: ChannelModel::Rayleigh,
        }
    }
}

impl ChannelParams {
    pub fn rayleigh(sigma2_sr: f64, sigma2_st: f64, sigma2_tr: f64) -> Self {
        Self {
            sigma2_sr,
            sigma2_st,
            sigma2_tr,
            model: ChannelModel::Rayleigh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma2_sr", self.sigma2_sr),
            ("sigma2_st", self.sigma2_st),
            ("sigma2_tr", self.sigma2_tr),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if let ChannelModel::Rician { kappa } = self.model {
            if !(kappa >= 0.0) || !kappa.is_finite() {
                return Err(invalid(format!("Rician kappa must be >= 0, got {kappa}")));
            }
        }
        Ok(())
    }

    /// `E[|h|^2]` of a single link with NLoS variance `variance` under this model.
    pub fn link_power(&self, variance: f64) -> f64 {
        match self.model {
            ChannelModel::Rayleigh => variance,
            ChannelModel::Rician { kappa } => (kappa + variance) / (kappa + 1.0),
        }
    }

    /// Mean power of the direct source-reader gain.
    pub fn direct_power(&self) -> f64 {
        self.link_power(self.sigma2_sr)
    }

    fn draw<R: Rng + ?Sized>(&self, variance: f64, rng: &mut R) -> Complex64 {
        match self.model {
            ChannelModel::Rayleigh => cscg(variance, rng),
            ChannelModel::Rician { kappa } => rician_unchecked(kappa, variance, rng),
        }
    }
}

/// One coherence block's gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization {
    pub h_sr: Complex64,
    pub h_st: Complex64,
    pub h_tr: Complex64,
    pub h0: Complex64,
    pub h1: Complex64,
    pub gamma: Complex64,
}

impl ChannelRealization {
    /// Assembles a realization from explicit link gains.
    pub fn from_gains(h_sr: Complex64, h_st: Complex64, h_tr: Complex64, gamma: Complex64) -> Self {
        Self {
            h_sr,
            h_st,
            h_tr,
            h0: h_sr,
            h1: h_sr + gamma * h_st * h_tr,
            gamma,
        }
    }

    /// Cascaded tag path `h_st * h_tr`.
    pub fn cascade(&self) -> Complex64 {
        self.h_st * self.h_tr
    }
}

/// Zero-mean circularly-symmetric complex Gaussian draw with total variance `variance`.
#[inline]
pub(crate) fn cscg<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Complex64 {
    let scale = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(scale * re, scale * im)
}

fn rician_unchecked<R: Rng + ?Sized>(kappa: f64, variance: f64, rng: &mut R) -> Complex64 {
    let los = (kappa / (kappa + 1.0)).sqrt();
    let nlos = (1.0 / (kappa + 1.0)).sqrt();
    Complex64::new(los, 0.0) + nlos * cscg(variance, rng)
}

/// Rayleigh gain: `CN(0, variance)`.
pub fn sample_rayleigh<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Result<Complex64> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(invalid(format!("Rayleigh variance must be positive, got {variance}")));
    }
    Ok(cscg(variance, rng))
}

/// Rician gain `sqrt(k/(k+1)) + sqrt(1/(k+1)) * CN(0, variance)`.
pub fn sample_rician<R: Rng + ?Sized>(kappa: f64, variance: f64, rng: &mut R) -> Result<Complex64> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(invalid(format!("Rician kappa must be >= 0, got {kappa}")));
    }
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(invalid(format!("Rician variance must be positive, got {variance}")));
    }
    Ok(rician_unchecked(kappa, variance, rng))
}

/// Draws the three independent link gains and the composite gains.
pub fn realize_channels<R: Rng + ?Sized>(
    params: &ChannelParams,
    gamma: Complex64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    params.validate()?;
    if gamma.norm_sqr() > 1.0 + 1e-12 {
        return Err(invalid(format!("|gamma|^2 must be <= 1, got {}", gamma.norm_sqr())));
    }
    let h_sr = params.draw(params.sigma2_sr, rng);
    let h_st = params.draw(params.sigma2_st, rng);
    let h_tr = params.draw(params.sigma2_tr, rng);
    Ok(ChannelRealization::from_gains(h_sr, h_st, h_tr, gamma))
}

/// Tag reflection coefficient for a load against the antenna impedance.
pub fn reflection_coefficient(z_load: Complex64, z_antenna: Complex64) -> Result<Complex64> {
    let den = z_load + z_antenna;
    if den.norm() == 0.0 || !den.norm().is_finite() {
        return Err(invalid("load + antenna impedance is zero"));
    }
    Ok((z_load - z_antenna.conj()) / den)
}

/// Geometry and antenna figures for the reader power budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub d_sr: f64,
    pub d_st: f64,
    pub d_tr: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    /// Carrier frequency in Hz.
    pub f_c: f64,
    /// Tag antenna gain (linear).
    pub g_l: f64,
    pub xi: f64,
}

impl Default for LinkBudget {
    /// Reference deployment: 915 MHz carrier, free-space exponents, 0 dB tag antenna.
    fn default() -> Self {
        Self {
            d_sr: 4.8,
            d_st: 2.5,
            d_tr: 0.5,
            v1: 2.0,
            v2: 2.0,
            v3: 2.0,
            f_c: 915.0e6,
            g_l: 1.0,
            xi: 1.0,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        for (name, d) in [("d_sr", self.d_sr), ("d_st", self.d_st), ("d_tr", self.d_tr)] {
            if !(d > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {d}")));
            }
        }
        if !(self.xi > 0.0 && self.xi <= 1.0) {
            return Err(invalid(format!("xi must lie in (0, 1], got {}", self.xi)));
        }
        if !(self.f_c > 0.0) || !(self.g_l > 0.0) {
            return Err(invalid("carrier frequency and antenna gain must be positive"));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c
    }

    /// `F = lambda^2 / (4 pi)^2`.
    pub fn friis_factor(&self) -> f64 {
        let lambda = self.wavelength();
        lambda * lambda / (4.0 * std::f64::consts::PI).powi(2)
    }
}

/// Direct-link received power at the reader (dBm) given the backscatter power `p_c_dbm`.
///
/// Evaluated in the dB domain, every log term being `10 log10`.
pub fn received_power_dbm(budget: &LinkBudget, p_c_dbm: f64) -> Result<f64> {
    budget.validate()?;
    let db = |x: f64| 10.0 * x.log10();
    Ok(p_c_dbm + budget.v1 * db(budget.d_st) + budget.v2 * db(budget.d_tr)
        - budget.v3 * db(budget.d_sr)
        - db(budget.xi * budget.friis_factor() * budget.g_l * budget.g_l))
}

/// Relative SNR `eta = p_c / p_r` (linear powers).
pub fn relative_snr(p_c: f64, p_r: f64) -> Result<f64> {
    if !(p_r > 0.0) {
        return Err(invalid(format!("p_r must be positive, got {p_r}")));
    }
    if !(p_c >= 0.0) {
        return Err(invalid(format!("p_c must be non-negative, got {p_c}")));
    }
    Ok(p_c / p_r)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * db_to_linear(dbm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Two-sample Kolmogorov-Smirnov statistic.
    fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn rayleigh_second_moment() {
        let mut rng = rng_from_seed(1);
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| sample_rayleigh(1.0, &mut rng).unwrap().norm_sqr())
            .sum::<f64>()
            / n as f64;
        // |h|^2 ~ Exp(1): standard error 1e-3.
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn rayleigh_moment_within_three_standard_errors() {
        let mut rng = rng_from_seed(2);
        let n = 200_000;
        let var = 2.5;
        let mean = (0..n)
            .map(|_| sample_rayleigh(var, &mut rng).unwrap().norm_sqr())
            .sum::<f64>()
            / n as f64;
        let se = var / (n as f64).sqrt();
        assert!((mean - var).abs() < 3.0 * se);
    }

    #[test]
    fn rayleigh_rejects_zero_variance() {
        let mut rng = rng_from_seed(0);
        assert!(sample_rayleigh(0.0, &mut rng).is_err());
        assert!(sample_rayleigh(-1.0, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_sample() {
        let a = sample_rayleigh(1.0, &mut rng_from_seed(77)).unwrap();
        let b = sample_rayleigh(1.0, &mut rng_from_seed(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rician_kappa_zero_matches_rayleigh() {
        // Same stream: with kappa = 0 the draw is the Rayleigh draw itself.
        let a = sample_rician(0.0, 1.0, &mut rng_from_seed(5)).unwrap();
        let b = sample_rayleigh(1.0, &mut rng_from_seed(5)).unwrap();
        assert_relative_eq!(a.re, b.re, epsilon = 1e-15);
        assert_relative_eq!(a.im, b.im, epsilon = 1e-15);

        // And distributionally, on independent streams.
        let n = 100_000;
        let mut r1 = rng_from_seed(10);
        let mut r2 = rng_from_seed(11);
        let a: Vec<f64> = (0..n).map(|_| sample_rician(0.0, 1.0, &mut r1).unwrap().norm()).collect();
        let b: Vec<f64> = (0..n).map(|_| sample_rayleigh(1.0, &mut r2).unwrap().norm()).collect();
        let d = ks_statistic(a, b);
        // Critical value at alpha = 0.01: 1.628 * sqrt(2/n).
        let crit = 1.628 * (2.0 / n as f64).sqrt();
        assert!(d < crit, "KS {d} >= {crit}");
    }

    #[test]
    fn rician_los_limit() {
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            let h = sample_rician(1e9, 1.0, &mut rng).unwrap();
            assert!((h - c(1.0, 0.0)).norm() < 1e-3);
        }
    }

    #[test]
    fn rician_second_moment() {
        let mut rng = rng_from_seed(4);
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| sample_rician(3.0, 1.0, &mut rng).unwrap().norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn rician_rejects_negative_kappa() {
        assert!(sample_rician(-0.1, 1.0, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn composite_gain_is_exact() {
        let mut rng = rng_from_seed(6);
        let params = ChannelParams::default();
        let gamma = c(0.7, 0.1);
        for _ in 0..10_000 {
            let ch = realize_channels(&params, gamma, &mut rng).unwrap();
            assert_eq!(ch.h0, ch.h_sr);
            assert!((ch.h1 - ch.h0 - gamma * ch.h_st * ch.h_tr).norm() <= 1e-15 * (1.0 + ch.h1.norm()));
        }
    }

    #[test]
    fn no_backscatter_cases() {
        let mut rng = rng_from_seed(7);
        let ch = realize_channels(&ChannelParams::default(), c(0.0, 0.0), &mut rng).unwrap();
        assert_eq!(ch.h1, ch.h0);

        let ch = ChannelRealization::from_gains(c(0.3, -0.2), c(0.0, 0.0), c(1.1, 0.4), c(1.0, 0.0));
        assert_eq!(ch.h1, ch.h0);
    }

    #[test]
    fn composite_second_moment() {
        let mut rng = rng_from_seed(8);
        let params = ChannelParams::default();
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| realize_channels(&params, c(1.0, 0.0), &mut rng).unwrap().h1.norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 2.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn realize_rejects_active_gamma() {
        let mut rng = rng_from_seed(0);
        assert!(realize_channels(&ChannelParams::default(), c(1.1, 0.0), &mut rng).is_err());
    }

    #[test]
    fn reflection_coefficient_limits() {
        let z = reflection_coefficient(c(50.0, 0.0), c(50.0, 0.0)).unwrap();
        assert!(z.norm() < 1e-15);
        let z = reflection_coefficient(c(30.0, 12.0), c(30.0, -12.0)).unwrap();
        assert!(z.norm() < 1e-15);
        let z = reflection_coefficient(c(0.0, 0.0), c(50.0, 0.0)).unwrap();
        assert_relative_eq!(z.re, -1.0);
        let z = reflection_coefficient(c(1e9, 0.0), c(50.0, 0.0)).unwrap();
        assert!((z - c(1.0, 0.0)).norm() < 1e-6);
        assert!(reflection_coefficient(c(-50.0, 3.0), c(50.0, -3.0)).is_err());
    }

    #[test]
    fn friis_factor_at_915_mhz() {
        let b = LinkBudget::default();
        assert_relative_eq!(b.wavelength(), 0.327_868_852_459_016_4, max_relative = 1e-12);
        assert_relative_eq!(b.friis_factor(), 6.807_389_387_418_555e-4, max_relative = 1e-12);
    }

    #[test]
    fn received_power_unit_geometry() {
        let b = LinkBudget {
            d_sr: 1.0,
            d_st: 1.0,
            d_tr: 1.0,
            ..LinkBudget::default()
        };
        let p = received_power_dbm(&b, 7.0).unwrap();
        assert_relative_eq!(p, 7.0 - 10.0 * b.friis_factor().log10(), max_relative = 1e-12);
    }

    #[test]
    fn received_power_reference_geometry() {
        // Hand evaluation: 20log10(2.5) + 20log10(0.5) - 20log10(4.8) - 10log10(F).
        let p = received_power_dbm(&LinkBudget::default(), 0.0).unwrap();
        assert_relative_eq!(p, 19.983_569_580_027_027, max_relative = 1e-12);
    }

    #[test]
    fn relative_snr_ratio() {
        assert_eq!(relative_snr(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(relative_snr(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(relative_snr(0.5, 1.0).unwrap(), 0.5);
        assert!(relative_snr(1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn passive_loads_reflect_at_most_unity(
            rl in 0.0f64..1e4, xl in -1e4f64..1e4,
            ra in 1e-3f64..1e4, xa in -1e4f64..1e4,
        ) {
            let g = reflection_coefficient(c(rl, xl), c(ra, xa)).unwrap();
            prop_assert!(g.norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn received_power_monotone_in_distances(
            d in 0.1f64..100.0, step in 0.01f64..10.0,
            v1 in 0.5f64..4.0, v2 in 0.5f64..4.0, v3 in 0.5f64..4.0,
        ) {
            let base = LinkBudget { d_sr: d, d_st: d, d_tr: d, v1, v2, v3, ..LinkBudget::default() };
            let p = received_power_dbm(&base, 0.0).unwrap();
            let st = received_power_dbm(&LinkBudget { d_st: d + step, ..base }, 0.0).unwrap();
            let tr = received_power_dbm(&LinkBudget { d_tr: d + step, ..base }, 0.0).unwrap();
            let sr = received_power_dbm(&LinkBudget { d_sr: d + step, ..base }, 0.0).unwrap();
            // Per the formula's signs: rising in d_st/d_tr, falling in d_sr.
            prop_assert!(st > p);
            prop_assert!(tr > p);
            prop_assert!(sr < p);
        }
    }
}
