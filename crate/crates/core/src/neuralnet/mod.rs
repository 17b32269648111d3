//! Small fully connected network used as a joint channel estimator and
//! bit detector.
//!
//! Input is one encoded frame (see [`encode_frame`]); output is the
//! probability that the data bit is 1.

mod adam;
mod checkpoint;
mod model;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use num_complex::Complex64;

use crate::airlink::{ReceivedFrame, SYMBOLS_PER_FRAME};
use crate::error::{invalid, Result};

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use model::{BatchNorm, ForwardPass, Gradients, HiddenCache, Linear, MlpModel, Mode};
pub use train::{train, TrainConfig, TrainReport};

/// Real features per complex sample of a frame: `Re(y), Im(y), Re(r), Im(r)`.
pub const FEATURES_PER_SAMPLE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    pub prob_clip_epsilon: f64,
}

impl MlpConfig {
    pub const DEFAULT_HIDDEN: [usize; 3] = [512, 256, 128];

    /// Default architecture for frames of `n_per_symbol` samples per symbol.
    pub fn for_frame(n_per_symbol: usize) -> Self {
        Self::with_dims(
            FEATURES_PER_SAMPLE * SYMBOLS_PER_FRAME * n_per_symbol,
            Self::DEFAULT_HIDDEN.to_vec(),
        )
    }

    pub fn with_dims(input_dim: usize, hidden_dims: Vec<usize>) -> Self {
        Self {
            input_dim,
            hidden_dims,
            bn_momentum: 0.99,
            bn_epsilon: 1e-5,
            prob_clip_epsilon: 1e-7,
        }
    }

    /// `[input, hidden..., 1]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(1);
        dims
    }

    /// Samples per symbol implied by the input width, if it is a frame encoding.
    pub fn n_per_symbol(&self) -> Option<usize> {
        let per = FEATURES_PER_SAMPLE * SYMBOLS_PER_FRAME;
        (self.input_dim % per == 0).then_some(self.input_dim / per)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(invalid("input_dim must be >= 1"));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(invalid("every hidden layer needs at least one neuron"));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0) {
            return Err(invalid(format!("bn_momentum must be in (0,1), got {}", self.bn_momentum)));
        }
        if !(self.bn_epsilon > 0.0 && self.bn_epsilon.is_finite()) {
            return Err(invalid("bn_epsilon must be positive"));
        }
        if !(self.prob_clip_epsilon > 0.0 && self.prob_clip_epsilon < 0.5) {
            return Err(invalid("prob_clip_epsilon must be in (0, 0.5)"));
        }
        Ok(())
    }
}

/// Per-feature z-score transform, fitted on training inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    /// Reciprocal standard deviation; 1 for constant features.
    pub inv_std: Array1<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            inv_std: Array1::ones(dim),
        }
    }

    pub fn fit(inputs: ArrayView2<'_, f64>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(invalid("cannot fit a standardizer on zero rows"));
        }
        let mean = inputs.mean_axis(Axis(0)).expect("non-empty");
        let var = inputs.var_axis(Axis(0), 0.0);
        let inv_std = var.mapv(|v| {
            let s = v.sqrt();
            if s > 1e-12 {
                1.0 / s
            } else {
                1.0
            }
        });
        Ok(Self { mean, inv_std })
    }

    pub fn apply(&self, inputs: ArrayView2<'_, f64>) -> Array2<f64> {
        (&inputs - &self.mean) * &self.inv_std
    }
}

/// Mean binary cross-entropy; predictions are expected to be clipped into (0,1).
pub fn bce_loss(predictions: ArrayView1<'_, f64>, labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(invalid("empty batch"));
    }
    let sum: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &q)| if q == 1 { -p.ln() } else { -(1.0 - p).ln() })
        .sum();
    Ok(sum / labels.len() as f64)
}

/// 1 iff `probability >= 0.5`.
pub fn decide_bit(probability: f64) -> u8 {
    (probability >= 0.5) as u8
}

/// Detects the data bit of one encoded frame.
pub fn predict_bit(model: &MlpModel, encoded: &[f64]) -> Result<u8> {
    let x = ArrayView2::from_shape((1, encoded.len()), encoded).map_err(|e| invalid(e.to_string()))?;
    let p = model.predict_proba(x)?;
    Ok(decide_bit(p[0]))
}

/// Flattens a frame into `[Re(y) | Im(y) | Re(r) | Im(r)]`, `12N` reals.
///
/// `r` is the reference the reader knows in advance: the reflection
/// coefficient of each pilot bit at pilot positions, zero over the data symbol.
pub fn encode_frame(rx: &ReceivedFrame) -> Result<Vec<f64>> {
    let n = rx.truth.n_per_symbol;
    let len = SYMBOLS_PER_FRAME * n;
    if n == 0 || rx.samples.len() != len {
        return Err(invalid(format!(
            "frame has {} samples, expected {len} (3 x {n})",
            rx.samples.len()
        )));
    }
    let mut out = vec![0.0; FEATURES_PER_SAMPLE * len];
    let (y, r) = out.split_at_mut(2 * len);
    for (k, s) in rx.samples.iter().enumerate() {
        y[k] = s.re;
        y[len + k] = s.im;
    }
    for (sym, &bit) in rx.truth.pilot_bits.iter().enumerate() {
        let g = rx.truth.reflection(bit);
        for k in sym * n..(sym + 1) * n {
            r[k] = g.re;
            r[len + k] = g.im;
        }
    }
    Ok(out)
}

/// Recovers the complex reference vector from an encoding.
pub fn decode_reference(encoded: &[f64]) -> Result<Vec<Complex64>> {
    if encoded.len() % FEATURES_PER_SAMPLE != 0 {
        return Err(invalid("encoding length is not a multiple of 4"));
    }
    let len = encoded.len() / FEATURES_PER_SAMPLE;
    let r = &encoded[2 * len..];
    Ok((0..len).map(|k| Complex64::new(r[k], r[len + k])).collect())
}

/// Inputs paired with their bit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub inputs: Array2<f64>,
    pub labels: Vec<u8>,
}

impl LabeledSet {
    pub fn new(inputs: Array2<f64>, labels: Vec<u8>) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(invalid(format!("{} rows but {} labels", inputs.nrows(), labels.len())));
        }
        if labels.iter().any(|&b| b > 1) {
            return Err(invalid("labels must be 0 or 1"));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Inference-mode probabilities for every row, computed in fixed-size chunks.
pub fn predict_all(model: &MlpModel, inputs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    const CHUNK: usize = 2048;
    let mut out = Array1::zeros(inputs.nrows());
    for start in (0..inputs.nrows()).step_by(CHUNK) {
        let end = (start + CHUNK).min(inputs.nrows());
        let p = model.predict_proba(inputs.slice(ndarray::s![start..end, ..]))?;
        out.slice_mut(ndarray::s![start..end]).assign(&p);
    }
    Ok(out)
}

/// Mean BCE over a whole set in inference mode.
pub fn evaluate_loss(model: &MlpModel, set: &LabeledSet) -> Result<f64> {
    if set.is_empty() {
        return Err(invalid("empty evaluation set"));
    }
    let p = predict_all(model, set.inputs.view())?;
    bce_loss(p.view(), &set.labels)
}

/// Fraction of rows whose decided bit differs from the label.
pub fn error_rate(model: &MlpModel, set: &LabeledSet) -> Result<f64> {
    if set.is_empty() {
        return Err(invalid("empty evaluation set"));
    }
    let p = predict_all(model, set.inputs.view())?;
    let errors = p.iter().zip(&set.labels).filter(|(&p, &q)| decide_bit(p) != q).count();
    Ok(errors as f64 / set.len() as f64)
}

#[cfg(test)]
mod tests;
