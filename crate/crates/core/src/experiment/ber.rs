use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, OperatingPoint};
use super::seed::{derive_seed, SeedLabel};
use crate::airlink::{bit_energy, effective_channel, energy_sum, synthesize_frame_with_noise, ReceivedFrame, TagFrame};
use crate::channel::realize_channels;
use crate::detectors::{
    bayesian_detect, ed_detect, glrt_detect, gmm_em_detect, ml_detect, semicoh_estimate, DetectorId, DetectorVerdict,
    HypothesisStats, PriorModel,
};
use crate::error::{AmbcError, Result};
use crate::neuralnet::{decide_bit, encode_frame, predict_all, MlpModel};
use crate::rng_from_seed;

/// Monte-Carlo BER estimate of one detector at one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub detector: DetectorId,
    pub snr_db: f64,
    pub eta: f64,
    pub xi: f64,
    pub n: usize,
    pub trials: usize,
    pub bits: u64,
    pub errors: u64,
    pub abstains: u64,
    pub ber: f64,
    pub seed: u64,
    pub wall_time_ms: f64,
}

impl BerRecord {
    /// Binomial standard error `sqrt(p (1-p) / bits)`.
    pub fn standard_error(&self) -> f64 {
        (self.ber * (1.0 - self.ber) / self.bits as f64).sqrt()
    }
}

/// Seed of coherence block `trial` at `point`. Shared by every detector, so
/// all of them see the same channels, bits and noise.
pub fn block_seed(cfg: &ExperimentConfig, point: OperatingPoint, trial: usize) -> u64 {
    let path: [SeedLabel; 6] = [
        "block".into(),
        point.snr_db.into(),
        point.eta.into(),
        point.xi.into(),
        cfg.n_per_symbol.into(),
        trial.into(),
    ];
    derive_seed(cfg.seed, &path)
}

/// Channel-energy priors for `point`, built once per point.
pub fn point_prior(cfg: &ExperimentConfig, point: OperatingPoint) -> Result<PriorModel> {
    let path: [SeedLabel; 5] = [
        "prior".into(),
        point.snr_db.into(),
        point.eta.into(),
        point.xi.into(),
        cfg.n_per_symbol.into(),
    ];
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &path));
    let mut prior = PriorModel::for_link(&cfg.channel, point.snr_db, point.eta, point.xi, cfg.prior_samples, &mut rng)?;
    prior.quadrature_nodes = cfg.quadrature_nodes;
    Ok(prior)
}

/// One coherence block: a channel draw and `bits_per_block` full frames.
pub struct Block {
    pub frames: Vec<ReceivedFrame>,
    pub csi: HypothesisStats,
}

pub fn simulate_block(cfg: &ExperimentConfig, point: OperatingPoint, seed: u64) -> Result<Block> {
    let mut rng = rng_from_seed(seed);
    let gamma = Complex64::new(point.xi.sqrt(), 0.0);
    let chan = realize_channels(&cfg.channel, gamma, &mut rng)?;
    let mut frames = Vec::with_capacity(cfg.bits_per_block);
    for _ in 0..cfg.bits_per_block {
        let bit = rng.random_range(0..2u8);
        let frame = TagFrame::ook(cfg.n_per_symbol, bit, point.xi);
        frames.push(synthesize_frame_with_noise(
            &frame,
            &chan,
            &cfg.source,
            point.snr_db,
            point.eta,
            cfg.noise_variance,
            &mut rng,
        )?);
    }
    let eff = effective_channel(&chan, gamma, point.snr_db, point.eta);
    let csi = HypothesisStats::from_csi(&eff, cfg.source.power(), cfg.noise_variance, cfg.n_per_symbol)?;
    Ok(Block { frames, csi })
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    errors: u64,
    abstains: u64,
    bits: u64,
    nanos: u128,
}

struct SideInfo<'a> {
    prior: Option<PriorModel>,
    model: Option<&'a MlpModel>,
}

fn check_side_info<'a>(
    cfg: &ExperimentConfig,
    point: OperatingPoint,
    detectors: &[DetectorId],
    model: Option<&'a MlpModel>,
) -> Result<SideInfo<'a>> {
    let prior = if detectors.iter().any(|d| matches!(d, DetectorId::Bayes | DetectorId::Glrt)) {
        Some(point_prior(cfg, point)?)
    } else {
        None
    };
    let model = if detectors.contains(&DetectorId::Dnn) {
        let m = model.ok_or_else(|| {
            AmbcError::MissingSideInfo("the dnn detector needs a trained model checkpoint (--model)".into())
        })?;
        let want = 12 * cfg.n_per_symbol;
        if m.config.input_dim != want {
            return Err(AmbcError::Config(format!(
                "model expects {} inputs but n = {} frames encode to {want}",
                m.config.input_dim, cfg.n_per_symbol
            )));
        }
        Some(m)
    } else {
        None
    };
    Ok(SideInfo { prior, model })
}

fn run_detector(
    cfg: &ExperimentConfig,
    detector: DetectorId,
    block: &Block,
    side: &SideInfo<'_>,
    rng: &mut impl Rng,
) -> Result<Vec<DetectorVerdict>> {
    let n = cfg.n_per_symbol;
    let p_s = cfg.source.power();
    let s2 = cfg.noise_variance;
    let z: Vec<f64> = block.frames.iter().map(|f| energy_sum(f.data_samples())).collect();
    let pilot_energies = || -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(2 * cfg.training_frames);
        for f in &block.frames[..cfg.training_frames] {
            for k in 0..2 {
                out.push(bit_energy(f.symbol(k))?);
            }
        }
        Ok(out)
    };
    let prior = || side.prior.as_ref().expect("prior built for bayes/glrt");

    Ok(match detector {
        DetectorId::Ml => z.iter().map(|&z| ml_detect(z, &block.csi)).collect(),
        DetectorId::Ed => z.iter().map(|&z| ed_detect(z / n as f64, &block.csi)).collect(),
        DetectorId::SemiCoh => {
            let e: Vec<f64> = z.iter().map(|&z| z / n as f64).collect();
            let (d0, d1) = semicoh_estimate(&e, &pilot_energies()?)?;
            let stats = HypothesisStats::from_deltas(d0, d1, s2, n)?;
            z.iter().map(|&z| ml_detect(z, &stats)).collect()
        }
        DetectorId::Bayes => z
            .iter()
            .map(|&z| bayesian_detect(z, prior(), p_s, s2, n))
            .collect::<Result<_>>()?,
        DetectorId::Glrt => z
            .iter()
            .map(|&z| glrt_detect(z, prior(), p_s, s2, n))
            .collect::<Result<_>>()?,
        DetectorId::Gmm => {
            let e: Vec<f64> = z.iter().map(|&z| z / n as f64).collect();
            let labeled: Vec<(f64, u8)> = pilot_energies()?.into_iter().map(|x| (x, 1)).collect();
            gmm_em_detect(&e, &labeled, cfg.gmm_max_iter, cfg.gmm_tol, rng)?.verdicts
        }
        DetectorId::Dnn => {
            let model = side.model.expect("model checked for dnn");
            let mut x = Array2::zeros((block.frames.len(), model.config.input_dim));
            for (row, f) in block.frames.iter().enumerate() {
                x.row_mut(row).assign(&ndarray::Array1::from(encode_frame(f)?));
            }
            predict_all(model, x.view())?
                .iter()
                .map(|&p| DetectorVerdict::decide(decide_bit(p) == 1, p, 0.5))
                .collect()
        }
    })
}

fn run_block(
    cfg: &ExperimentConfig,
    point: OperatingPoint,
    detectors: &[DetectorId],
    side: &SideInfo<'_>,
    trial: usize,
) -> Result<Vec<Tally>> {
    let seed = block_seed(cfg, point, trial);
    let block = simulate_block(cfg, point, seed)?;
    let mut tallies = Vec::with_capacity(detectors.len());
    for &d in detectors {
        let start = Instant::now();
        // Detector-private stream for GMM restarts and abstain coin flips.
        let mut rng = rng_from_seed(derive_seed(seed, &[d.as_str().into()]));
        let verdicts = run_detector(cfg, d, &block, side, &mut rng)?;
        let mut t = Tally::default();
        for (v, f) in verdicts.iter().zip(&block.frames) {
            let bit = if v.abstained {
                t.abstains += 1;
                rng.random_range(0..2u8)
            } else {
                v.bit
            };
            t.errors += (bit != f.truth.data_bit) as u64;
            t.bits += 1;
        }
        t.nanos = start.elapsed().as_nanos();
        tallies.push(t);
    }
    Ok(tallies)
}

/// Runs several detectors over the same Monte-Carlo blocks at one point.
///
/// Blocks are spread over `cfg.workers` threads; every block has its own
/// derived seed, so the counts do not depend on the worker count. An
/// abstaining detector is charged a fair coin flip.
pub fn run_point(
    cfg: &ExperimentConfig,
    point: OperatingPoint,
    detectors: &[DetectorId],
    model: Option<&MlpModel>,
) -> Result<Vec<BerRecord>> {
    let side = check_side_info(cfg, point, detectors, model)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| AmbcError::Config(format!("cannot start worker pool: {e}")))?;
    let per_block: Vec<Vec<Tally>> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|trial| run_block(cfg, point, detectors, &side, trial))
            .collect::<Result<_>>()
    })?;

    let mut totals = vec![Tally::default(); detectors.len()];
    for block in &per_block {
        for (acc, t) in totals.iter_mut().zip(block) {
            acc.errors += t.errors;
            acc.abstains += t.abstains;
            acc.bits += t.bits;
            acc.nanos += t.nanos;
        }
    }
    Ok(detectors
        .iter()
        .zip(totals)
        .map(|(&detector, t)| BerRecord {
            detector,
            snr_db: point.snr_db,
            eta: point.eta,
            xi: point.xi,
            n: cfg.n_per_symbol,
            trials: cfg.trials,
            bits: t.bits,
            errors: t.errors,
            abstains: t.abstains,
            ber: t.errors as f64 / t.bits as f64,
            seed: cfg.seed,
            wall_time_ms: if cfg.record_wall_time { t.nanos as f64 / 1e6 } else { 0.0 },
        })
        .collect())
}

pub fn run_ber_point(
    cfg: &ExperimentConfig,
    detector: DetectorId,
    point: OperatingPoint,
    model: Option<&MlpModel>,
) -> Result<BerRecord> {
    Ok(run_point(cfg, point, &[detector], model)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(detectors: Vec<DetectorId>) -> ExperimentConfig {
        ExperimentConfig {
            n_per_symbol: 10,
            trials: 40,
            bits_per_block: 50,
            detectors,
            prior_samples: 2048,
            seed: 9,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn counts_are_exact() {
        let cfg = quick(vec![DetectorId::Ml, DetectorId::Ed]);
        for r in run_point(&cfg, cfg.point(), &cfg.detectors, None).unwrap() {
            assert_eq!(r.bits, 2000);
            assert_eq!(r.ber * r.bits as f64, r.errors as f64);
            assert!(r.ber > 0.0 && r.ber < 0.5);
        }
    }

    #[test]
    fn worker_count_does_not_change_counts() {
        let mut cfg = quick(DetectorId::ALL[..6].to_vec());
        cfg.record_wall_time = false;
        cfg.workers = 1;
        let a = run_point(&cfg, cfg.point(), &cfg.detectors, None).unwrap();
        cfg.workers = 4;
        let b = run_point(&cfg, cfg.point(), &cfg.detectors, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dnn_without_model_is_missing_side_info() {
        let cfg = quick(vec![DetectorId::Dnn]);
        assert!(matches!(
            run_ber_point(&cfg, DetectorId::Dnn, cfg.point(), None),
            Err(AmbcError::MissingSideInfo(_))
        ));
    }

    #[test]
    fn dnn_with_wrong_width_is_rejected() {
        let cfg = quick(vec![DetectorId::Dnn]);
        let m = MlpModel::zeros(crate::MlpConfig::with_dims(12, vec![2])).unwrap();
        assert!(run_ber_point(&cfg, DetectorId::Dnn, cfg.point(), Some(&m)).is_err());
    }

    #[test]
    fn near_noiseless_ml_is_error_free() {
        // A constant-modulus source leaves noise as the only energy fluctuation.
        let mut cfg = quick(vec![DetectorId::Ml]);
        cfg.noise_variance = 1e-9;
        cfg.source = crate::SourceKind::ModulatedQary { q: 4, power: 1.0 };
        let r = run_ber_point(&cfg, DetectorId::Ml, cfg.point(), None).unwrap();
        assert_eq!(r.errors, 0);
    }

    #[test]
    fn zero_eta_makes_ml_abstain() {
        let mut cfg = quick(vec![DetectorId::Ml]);
        cfg.eta_grid = vec![0.0];
        let r = run_ber_point(&cfg, DetectorId::Ml, cfg.point(), None).unwrap();
        assert_eq!(r.abstains, r.bits);
    }
}
