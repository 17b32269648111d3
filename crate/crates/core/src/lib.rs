//! Simulation and detection workbench for ambient backscatter communication.
//!
//! A passive tag toggles its antenna load between a reflecting and an
//! absorbing state (on-off keying) on top of an ambient RF carrier. A reader
//! sees the direct source signal plus, when the tag reflects, a cascaded
//! source-tag-reader component, and has to decide which of the two energy
//! levels it is observing.
//!
//! The crate is split the way the processing chain runs:
//!
//! * [`channel`] samples Rayleigh/Rician gains and evaluates the link budget.
//! * [`airlink`] draws ambient source blocks and synthesizes reader frames
//!   (two pilot symbols followed by one data symbol, `N` samples each).
//! * [`detectors`] holds the classical detectors: ML, semi-coherent, energy,
//!   Bayesian, GLRT and a two-component GMM fitted by EM.
//! * [`neuralnet`] is a small from-scratch MLP (ReLU + batch norm, sigmoid
//!   head, BCE, Adam, early stopping) used as a joint estimator/detector.
//! * [`experiment`] drives Monte-Carlo BER points and sweeps, datasets,
//!   seeds, config files and CSV output.

pub mod airlink;
pub mod channel;
pub mod detectors;
pub mod error;
pub mod experiment;
pub mod neuralnet;

pub use num_complex::Complex64;

pub use airlink::{ReceivedFrame, SourceKind, TagFrame};
pub use channel::{ChannelModel, ChannelParams, ChannelRealization, LinkBudget};
pub use detectors::{DetectorId, DetectorVerdict, HypothesisStats, PriorModel};
pub use error::{AmbcError, Result};
pub use experiment::{BerRecord, ExperimentConfig};
pub use neuralnet::{MlpConfig, MlpModel, TrainConfig};

/// Random stream used throughout the crate. ChaCha8 is portable and
/// reproducible across platforms, which the seed lineage relies on.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Builds a [`SimRng`] from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}
