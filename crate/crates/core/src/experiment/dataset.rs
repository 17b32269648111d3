use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, OperatingPoint};
use super::seed::{derive_seed, SeedLabel};
use crate::airlink::{synthesize_frame_with_noise, TagFrame};
use crate::channel::realize_channels;
use crate::error::{invalid, Result};
use crate::neuralnet::{encode_frame, LabeledSet};
use crate::rng_from_seed;
use num_complex::Complex64;

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMeta {
    pub snr_db: f64,
    pub seed: u64,
}

/// Encoded frames with labels and per-sample provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub set: LabeledSet,
    pub meta: Vec<SampleMeta>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }
}

/// Seed of sample `index` in split `split` at `point`.
pub fn sample_seed(cfg: &ExperimentConfig, point: OperatingPoint, split: &str, index: usize) -> u64 {
    let path: [SeedLabel; 7] = [
        "dataset".into(),
        split.into(),
        point.snr_db.into(),
        point.eta.into(),
        point.xi.into(),
        cfg.n_per_symbol.into(),
        index.into(),
    ];
    derive_seed(cfg.seed, &path)
}

fn generate_split(cfg: &ExperimentConfig, point: OperatingPoint, split: &str, size: usize) -> Result<Dataset> {
    let n = cfg.n_per_symbol;
    let width = 12 * n;
    let gamma = Complex64::new(point.xi.sqrt(), 0.0);
    let rows: Vec<(Vec<f64>, u8, u64)> = (0..size)
        .into_par_iter()
        .map(|i| {
            let seed = sample_seed(cfg, point, split, i);
            let mut rng = rng_from_seed(seed);
            let chan = realize_channels(&cfg.channel, gamma, &mut rng)?;
            let bit = rng.random_range(0..2u8);
            let frame = TagFrame::ook(n, bit, point.xi);
            let rx = synthesize_frame_with_noise(
                &frame,
                &chan,
                &cfg.source,
                point.snr_db,
                point.eta,
                cfg.noise_variance,
                &mut rng,
            )?;
            Ok((encode_frame(&rx)?, bit, seed))
        })
        .collect::<Result<_>>()?;

    let mut inputs = Array2::zeros((size, width));
    let mut labels = Vec::with_capacity(size);
    let mut meta = Vec::with_capacity(size);
    for (i, (x, bit, seed)) in rows.into_iter().enumerate() {
        inputs.row_mut(i).assign(&ndarray::ArrayView1::from(&x));
        labels.push(bit);
        meta.push(SampleMeta {
            snr_db: point.snr_db,
            seed,
        });
    }
    Ok(Dataset {
        set: LabeledSet::new(inputs, labels)?,
        meta,
    })
}

/// Train/validation/test sets of encoded frames at one operating point.
///
/// Every sample draws its own channel and frame (pilots 1, data bit
/// uniform) from a seed that includes its split name, so the splits never
/// share a random stream.
pub fn generate_dataset(
    cfg: &ExperimentConfig,
    point: OperatingPoint,
    sizes: (usize, usize, usize),
) -> Result<(Dataset, Dataset, Dataset)> {
    if sizes.0 == 0 || sizes.1 == 0 || sizes.2 == 0 {
        return Err(invalid("dataset sizes must be positive"));
    }
    Ok((
        generate_split(cfg, point, "train", sizes.0)?,
        generate_split(cfg, point, "val", sizes.1)?,
        generate_split(cfg, point, "test", sizes.2)?,
    ))
}
