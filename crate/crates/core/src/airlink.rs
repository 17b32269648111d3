//! Ambient source waveforms, tag OOK framing and reader observations.
//!
//! A tag frame spans three tag symbols of `N` source samples each: two pilot
//! symbols followed by one data symbol. Within a symbol the reader observes
//!
//! ```text
//! y(n) = g_b * s(n) + w(n),   g_b = sqrt(snr) * (h_sr + sqrt(eta) * Gamma_b * h_st * h_tr)
//! ```
//!
//! with `w ~ CN(0, noise_variance)` (unit by default) and `Gamma_b` the
//! reflection state of tag bit `b` (`0` absorbs, `1` reflects with
//! `sqrt(xi)`).

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{cscg, db_to_linear, ChannelRealization};
use crate::error::{invalid, Result};

/// Ambient RF source statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceKind {
    /// `s(n) ~ CN(0, power)`.
    ComplexGaussian { power: f64 },
    /// Equiprobable `q`-PSK symbols scaled to `power`.
    ModulatedQary { q: u32, power: f64 },
}

impl Default for SourceKind {
    fn default() -> Self {
        SourceKind::ComplexGaussian { power: 1.0 }
    }
}

impl SourceKind {
    pub fn power(&self) -> f64 {
        match *self {
            SourceKind::ComplexGaussian { power } | SourceKind::ModulatedQary { power, .. } => power,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power() > 0.0) || !self.power().is_finite() {
            return Err(invalid(format!("source power must be positive, got {}", self.power())));
        }
        if let SourceKind::ModulatedQary { q, .. } = *self {
            if q < 2 || !q.is_power_of_two() {
                return Err(invalid(format!("PSK order must be a power of two >= 2, got {q}")));
            }
        }
        Ok(())
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        match *self {
            SourceKind::ComplexGaussian { power } => cscg(power, rng),
            SourceKind::ModulatedQary { q, power } => {
                let k = rng.random_range(0..q);
                let phase = std::f64::consts::TAU * (k as f64 + 0.5) / q as f64;
                Complex64::from_polar(power.sqrt(), phase)
            }
        }
    }
}

/// Draws `count` iid ambient samples.
pub fn draw_source_block<R: Rng + ?Sized>(kind: &SourceKind, count: usize, rng: &mut R) -> Result<Vec<Complex64>> {
    kind.validate()?;
    if count == 0 {
        return Err(invalid("source block must contain at least one sample"));
    }
    Ok((0..count).map(|_| kind.draw(rng)).collect())
}

/// Number of tag symbols per frame (two pilots, one data symbol).
pub const SYMBOLS_PER_FRAME: usize = 3;
/// Pilot bits sent at the start of every frame.
pub const PILOT_BITS: [u8; 2] = [1, 1];

/// What the tag sends during one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagFrame {
    pub n_per_symbol: usize,
    pub pilot_bits: [u8; 2],
    pub data_bit: u8,
    pub reflection_on: Complex64,
    pub reflection_off: Complex64,
}

impl TagFrame {
    /// OOK frame: reflecting state `sqrt(xi)`, absorbing state `0`, pilots `[1, 1]`.
    pub fn ook(n_per_symbol: usize, data_bit: u8, xi: f64) -> Self {
        Self {
            n_per_symbol,
            pilot_bits: PILOT_BITS,
            data_bit,
            reflection_on: Complex64::new(xi.sqrt(), 0.0),
            reflection_off: Complex64::new(0.0, 0.0),
        }
    }

    pub fn symbols(&self) -> [u8; SYMBOLS_PER_FRAME] {
        [self.pilot_bits[0], self.pilot_bits[1], self.data_bit]
    }

    /// Total source samples covered by the frame (`3N`).
    pub fn len(&self) -> usize {
        SYMBOLS_PER_FRAME * self.n_per_symbol
    }

    pub fn is_empty(&self) -> bool {
        self.n_per_symbol == 0
    }

    pub fn reflection(&self, bit: u8) -> Complex64 {
        if bit == 0 {
            self.reflection_off
        } else {
            self.reflection_on
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_symbol == 0 {
            return Err(invalid("frame needs at least one sample per symbol"));
        }
        if self.data_bit > 1 || self.pilot_bits.iter().any(|&b| b > 1) {
            return Err(invalid("tag bits must be 0 or 1"));
        }
        for g in [self.reflection_on, self.reflection_off] {
            if g.norm_sqr() > 1.0 + 1e-12 {
                return Err(invalid(format!("|Gamma|^2 must be <= 1, got {}", g.norm_sqr())));
            }
        }
        Ok(())
    }
}

/// Reader observation of one tag frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub samples: Vec<Complex64>,
    /// Ambient samples that produced `samples` (kept for diagnostics and tests).
    pub source: Vec<Complex64>,
    pub snr_db: f64,
    pub eta: f64,
    pub truth: TagFrame,
    pub channel: ChannelRealization,
    pub noise_variance: f64,
    /// Effective gain while the tag absorbs.
    pub gain_off: Complex64,
    /// Effective gain while the tag reflects.
    pub gain_on: Complex64,
}

impl ReceivedFrame {
    /// Samples of tag symbol `k` (0 and 1 are pilots, 2 is data).
    pub fn symbol(&self, k: usize) -> &[Complex64] {
        let n = self.truth.n_per_symbol;
        &self.samples[k * n..(k + 1) * n]
    }

    pub fn pilot_samples(&self) -> &[Complex64] {
        &self.samples[..2 * self.truth.n_per_symbol]
    }

    pub fn data_samples(&self) -> &[Complex64] {
        self.symbol(2)
    }

    /// Effective channel seen by the reader with reflection state `gamma`.
    pub fn effective_channel(&self) -> ChannelRealization {
        effective_channel(&self.channel, self.truth.reflection_on, self.snr_db, self.eta)
    }
}

/// Folds the SNR scale and `sqrt(eta)` into the link gains so that
/// `h0`/`h1` of the result are the gains the reader actually sees.
pub fn effective_channel(chan: &ChannelRealization, gamma_on: Complex64, snr_db: f64, eta: f64) -> ChannelRealization {
    let scale = db_to_linear(snr_db).sqrt();
    ChannelRealization::from_gains(scale * chan.h_sr, scale * eta.sqrt() * chan.h_st, chan.h_tr, gamma_on)
}

/// Synthesizes a frame with unit noise variance.
pub fn synthesize_frame<R: Rng + ?Sized>(
    frame: &TagFrame,
    chan: &ChannelRealization,
    kind: &SourceKind,
    snr_db: f64,
    eta: f64,
    rng: &mut R,
) -> Result<ReceivedFrame> {
    synthesize_frame_with_noise(frame, chan, kind, snr_db, eta, 1.0, rng)
}

/// As [`synthesize_frame`] with an explicit noise variance (zero gives noiseless frames).
pub fn synthesize_frame_with_noise<R: Rng + ?Sized>(
    frame: &TagFrame,
    chan: &ChannelRealization,
    kind: &SourceKind,
    snr_db: f64,
    eta: f64,
    noise_variance: f64,
    rng: &mut R,
) -> Result<ReceivedFrame> {
    frame.validate()?;
    kind.validate()?;
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(invalid(format!("eta must be >= 0, got {eta}")));
    }
    if !snr_db.is_finite() {
        return Err(invalid("snr_db must be finite"));
    }
    if !(noise_variance >= 0.0) {
        return Err(invalid(format!("noise variance must be >= 0, got {noise_variance}")));
    }

    let eff = effective_channel(chan, frame.reflection_on, snr_db, eta);
    let gain_on = eff.h1;
    let gain_off = eff.h_sr + frame.reflection_off * eff.cascade();

    let n = frame.n_per_symbol;
    let mut samples = Vec::with_capacity(frame.len());
    let mut source = Vec::with_capacity(frame.len());
    for bit in frame.symbols() {
        let g = if bit == 0 { gain_off } else { gain_on };
        for _ in 0..n {
            let s = kind.draw(rng);
            let w = if noise_variance > 0.0 {
                cscg(noise_variance, rng)
            } else {
                Complex64::new(0.0, 0.0)
            };
            source.push(s);
            samples.push(g * s + w);
        }
    }

    Ok(ReceivedFrame {
        samples,
        source,
        snr_db,
        eta,
        truth: *frame,
        channel: *chan,
        noise_variance,
        gain_off,
        gain_on,
    })
}

/// Average sample energy `(1/N) sum |y(n)|^2`.
pub fn bit_energy(samples: &[Complex64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("energy of an empty sample block"));
    }
    Ok(energy_sum(samples) / samples.len() as f64)
}

/// `sum |y(n)|^2`, the ML statistic `z`.
#[inline]
pub fn energy_sum(samples: &[Complex64]) -> f64 {
    samples.iter().map(|y| y.norm_sqr()).sum()
}
