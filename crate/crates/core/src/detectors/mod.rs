//! Classical tag-bit detectors.
//!
//! Every detector works on the energy of one data symbol and returns a
//! [`DetectorVerdict`]. They differ in what side information they get:
//!
//! | detector | needs |
//! |---|---|
//! | [`ml_detect`] | per-block CSI (`HypothesisStats`) |
//! | [`ed_detect`] | per-block CSI, Gaussian (CLT) approximation |
//! | [`semicoh_estimate`] + [`ml_detect`] | block energies and pilot energies |
//! | [`bayesian_detect`] | channel priors (`PriorModel`) |
//! | [`glrt_detect`] | channel priors (`PriorModel`) |
//! | [`gmm_em_detect`] | block energies and labeled pilots |

mod bayes;
mod energy;
mod glrt;
mod gmm;
mod ml;
mod prior;
mod semicoh;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::error::{invalid, AmbcError, Result};

pub use bayes::{bayes_log_marginals, bayesian_detect, h0_log_marginal, h0_log_marginal_with_nodes, h1_log_marginal, LogMarginals};
pub use energy::{ed_detect, ed_threshold};
pub use glrt::{glrt_detect, glrt_estimate};
pub use gmm::{gmm_em_detect, GmmFit, GmmOutcome};
pub use ml::{ml_detect, ml_log_likelihood_ratio, ml_threshold};
pub use prior::PriorModel;
pub use semicoh::semicoh_estimate;

/// Relative tolerance under which two hypothesis energies count as equal.
pub const DEGENERATE_RTOL: f64 = 1e-12;

/// Per-bit decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorVerdict {
    pub bit: u8,
    pub statistic: f64,
    pub threshold: f64,
    pub abstained: bool,
}

impl DetectorVerdict {
    pub fn decide(bit: bool, statistic: f64, threshold: f64) -> Self {
        Self {
            bit: bit as u8,
            statistic,
            threshold,
            abstained: false,
        }
    }

    pub fn abstain(statistic: f64, threshold: f64) -> Self {
        Self {
            bit: 0,
            statistic,
            threshold,
            abstained: true,
        }
    }
}

/// Energy means and CLT variances of the two hypotheses for one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisStats {
    pub delta2_0: f64,
    pub delta2_1: f64,
    pub gamma2_0: f64,
    pub gamma2_1: f64,
    pub n: usize,
}

impl HypothesisStats {
    /// Statistics implied by known composite gains.
    pub fn from_csi(chan: &ChannelRealization, p_s: f64, sigma2_w: f64, n: usize) -> Result<Self> {
        Self::from_gains(chan.h0, chan.h1, p_s, sigma2_w, n)
    }

    pub fn from_gains(h0: Complex64, h1: Complex64, p_s: f64, sigma2_w: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("samples per bit must be >= 1"));
        }
        let s0 = h0.norm_sqr() * p_s;
        let s1 = h1.norm_sqr() * p_s;
        let two_over_n = 2.0 / n as f64;
        Ok(Self {
            delta2_0: s0 + sigma2_w,
            delta2_1: s1 + sigma2_w,
            gamma2_0: two_over_n * s0 * sigma2_w,
            gamma2_1: two_over_n * s1 * sigma2_w,
            n,
        })
    }

    /// Statistics from (estimated) energy means; the signal part is clamped at zero.
    pub fn from_deltas(delta2_0: f64, delta2_1: f64, sigma2_w: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("samples per bit must be >= 1"));
        }
        let two_over_n = 2.0 / n as f64;
        Ok(Self {
            delta2_0,
            delta2_1,
            gamma2_0: two_over_n * (delta2_0 - sigma2_w).max(0.0) * sigma2_w,
            gamma2_1: two_over_n * (delta2_1 - sigma2_w).max(0.0) * sigma2_w,
            n,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        let scale = self.delta2_0.abs().max(self.delta2_1.abs());
        (self.delta2_1 - self.delta2_0).abs() <= DEGENERATE_RTOL * scale
    }
}

/// Detector selector used by the experiment harness and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectorId {
    Ml,
    SemiCoh,
    Ed,
    Bayes,
    Glrt,
    Gmm,
    Dnn,
}

impl DetectorId {
    pub const ALL: [DetectorId; 7] = [
        DetectorId::Ml,
        DetectorId::SemiCoh,
        DetectorId::Ed,
        DetectorId::Bayes,
        DetectorId::Glrt,
        DetectorId::Gmm,
        DetectorId::Dnn,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DetectorId::Ml => "ml",
            DetectorId::SemiCoh => "semicoh",
            DetectorId::Ed => "ed",
            DetectorId::Bayes => "bayes",
            DetectorId::Glrt => "glrt",
            DetectorId::Gmm => "gmm",
            DetectorId::Dnn => "dnn",
        }
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorId {
    type Err = AmbcError;

    fn from_str(s: &str) -> Result<Self> {
        DetectorId::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                AmbcError::Config(format!(
                    "unknown detector '{s}' (expected one of ml, semicoh, ed, bayes, glrt, gmm, dnn)"
                ))
            })
    }
}
