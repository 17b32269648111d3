use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::Uniform;

use super::{MlpConfig, Standardizer};
use crate::error::{invalid, AmbcError, Result};

/// Fully connected layer `z = a W^T + b` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Per-feature batch normalization with learned scale/shift.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn identity(width: usize) -> Self {
        Self {
            scale: Array1::ones(width),
            shift: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are reported for update.
    Train,
    /// Running statistics.
    Infer,
}

/// Feed-forward network: `[linear -> ReLU -> batch norm] x hidden -> linear -> sigmoid`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub linears: Vec<Linear>,
    pub norms: Vec<BatchNorm>,
    pub standardizer: Standardizer,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct HiddenCache {
    input: Array2<f64>,
    pre_activation: Array2<f64>,
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

impl HiddenCache {
    /// Post-ReLU, pre-scale/shift normalized activations.
    pub fn normalized(&self) -> &Array2<f64> {
        &self.normalized
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub mode: Mode,
    /// Clipped sigmoid outputs.
    pub predictions: Array1<f64>,
    pub hidden: Vec<HiddenCache>,
    head_input: Array2<f64>,
    /// Unclipped sigmoid outputs.
    raw: Array1<f64>,
}

/// Gradients laid out like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub linears: Vec<Linear>,
    pub norms: Vec<(Array1<f64>, Array1<f64>)>,
}

impl Gradients {
    /// Flat views in the order of [`MlpModel::parameters_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.linears.len() + 2 * self.norms.len());
        for l in &self.linears {
            out.push(l.weight.as_slice().expect("contiguous"));
            out.push(l.bias.as_slice().expect("contiguous"));
        }
        for (s, b) in &self.norms {
            out.push(s.as_slice().expect("contiguous"));
            out.push(b.as_slice().expect("contiguous"));
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |m, g| m.max(g.abs()))
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl MlpModel {
    /// He-style uniform init for ReLU layers, `1/sqrt(fan_in)` for the head.
    pub fn new<R: Rng + ?Sized>(config: MlpConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let dims = config.layer_dims();
        let n_linear = dims.len() - 1;
        let mut linears = Vec::with_capacity(n_linear);
        for l in 0..n_linear {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let bound = if l + 1 == n_linear {
                1.0 / (fan_in as f64).sqrt()
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.sample(dist));
            linears.push(Linear {
                weight,
                bias: Array1::zeros(fan_out),
            });
        }
        let norms = config.hidden_dims.iter().map(|&w| BatchNorm::identity(w)).collect();
        let standardizer = Standardizer::identity(config.input_dim);
        Ok(Self {
            config,
            linears,
            norms,
            standardizer,
        })
    }

    /// All weights and biases zero; the output is `sigmoid(0) = 0.5` everywhere.
    pub fn zeros(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let dims = config.layer_dims();
        let linears = dims
            .windows(2)
            .map(|w| Linear {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        let norms = config.hidden_dims.iter().map(|&w| BatchNorm::identity(w)).collect();
        Ok(Self {
            standardizer: Standardizer::identity(config.input_dim),
            config,
            linears,
            norms,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.linears.iter().map(|l| l.weight.len() + l.bias.len()).sum::<usize>()
            + self.norms.iter().map(|n| 2 * n.scale.len()).sum::<usize>()
    }

    /// Trainable parameters, flattened, in a fixed order.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.linears {
            out.push(l.weight.as_slice_mut().expect("contiguous"));
            out.push(l.bias.as_slice_mut().expect("contiguous"));
        }
        for n in &mut self.norms {
            out.push(n.scale.as_slice_mut().expect("contiguous"));
            out.push(n.shift.as_slice_mut().expect("contiguous"));
        }
        out
    }

    pub fn forward(&self, inputs: ArrayView2<'_, f64>, mode: Mode) -> Result<ForwardPass> {
        if inputs.ncols() != self.config.input_dim {
            return Err(invalid(format!(
                "input width {} does not match model input {}",
                inputs.ncols(),
                self.config.input_dim
            )));
        }
        if inputs.nrows() == 0 {
            return Err(invalid("empty batch"));
        }
        let eps = self.config.bn_epsilon;
        let mut act = self.standardizer.apply(inputs);
        let mut hidden = Vec::with_capacity(self.norms.len());

        for (l, (lin, bn)) in self.linears.iter().zip(&self.norms).enumerate() {
            let mut z = act.dot(&lin.weight.t());
            z += &lin.bias;
            let r = z.mapv(|v| v.max(0.0));
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = r.mean_axis(Axis(0)).expect("non-empty batch");
                    let var = (&r - &mean).mapv(|d| d * d).mean_axis(Axis(0)).expect("non-empty batch");
                    (mean, var)
                }
                Mode::Infer => (bn.running_mean.clone(), bn.running_var.clone()),
            };
            let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
            let normalized = (&r - &mean) * &inv_std;
            let out = &normalized * &bn.scale + &bn.shift;
            if out.iter().any(|v| !v.is_finite()) {
                return Err(AmbcError::Training(format!("non-finite activation in hidden layer {l}")));
            }
            hidden.push(HiddenCache {
                input: std::mem::replace(&mut act, out),
                pre_activation: z,
                normalized,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            });
        }

        let head = self.linears.last().expect("at least one layer");
        let mut z = act.dot(&head.weight.t());
        z += &head.bias;
        let raw: Array1<f64> = z.column(0).mapv(sigmoid);
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(AmbcError::Training("non-finite output logit".into()));
        }
        let clip = self.config.prob_clip_epsilon;
        let predictions = raw.mapv(|p| p.clamp(clip, 1.0 - clip));
        Ok(ForwardPass {
            mode,
            predictions,
            hidden,
            head_input: act,
            raw,
        })
    }

    /// Sigmoid outputs with running statistics.
    pub fn predict_proba(&self, inputs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.forward(inputs, Mode::Infer)?.predictions)
    }

    /// Folds a train-mode pass's batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, pass: &ForwardPass) {
        if pass.mode != Mode::Train {
            return;
        }
        let m = self.config.bn_momentum;
        for (bn, cache) in self.norms.iter_mut().zip(&pass.hidden) {
            Zip::from(&mut bn.running_mean)
                .and(&cache.batch_mean)
                .for_each(|r, &b| *r = m * *r + (1.0 - m) * b);
            Zip::from(&mut bn.running_var)
                .and(&cache.batch_var)
                .for_each(|r, &b| *r = m * *r + (1.0 - m) * b);
        }
    }

    /// Exact gradients of the mean BCE of a train-mode pass.
    pub fn backward(&self, pass: &ForwardPass, labels: &[u8]) -> Result<Gradients> {
        self.backward_scaled(pass, labels, 1.0)
    }

    /// Gradients of `loss_scale * J`.
    pub fn backward_scaled(&self, pass: &ForwardPass, labels: &[u8], loss_scale: f64) -> Result<Gradients> {
        let b = pass.predictions.len();
        if labels.len() != b {
            return Err(invalid(format!("{} labels for a batch of {b}", labels.len())));
        }
        if pass.mode != Mode::Train {
            return Err(invalid("backward needs a train-mode forward pass"));
        }
        let clip = self.config.prob_clip_epsilon;
        let scale = loss_scale / b as f64;
        // d(BCE)/d(logit) through sigmoid; zero where the probability was clipped.
        let mut dz = Array2::<f64>::zeros((b, 1));
        for i in 0..b {
            let p = pass.raw[i];
            if p > clip && p < 1.0 - clip {
                dz[[i, 0]] = scale * (p - labels[i] as f64);
            }
        }

        let n_hidden = self.norms.len();
        let mut linear_grads = vec![None; n_hidden + 1];
        let mut norm_grads = vec![None; n_hidden];

        let head = &self.linears[n_hidden];
        linear_grads[n_hidden] = Some(Linear {
            weight: dz.t().dot(&pass.head_input),
            bias: dz.sum_axis(Axis(0)),
        });
        let mut d_act = dz.dot(&head.weight);

        for l in (0..n_hidden).rev() {
            let cache = &pass.hidden[l];
            let bn = &self.norms[l];
            let d_scale = (&d_act * &cache.normalized).sum_axis(Axis(0));
            let d_shift = d_act.sum_axis(Axis(0));
            let d_norm = &d_act * &bn.scale;
            let mean_d = d_norm.mean_axis(Axis(0)).expect("non-empty");
            let mean_dx = (&d_norm * &cache.normalized).mean_axis(Axis(0)).expect("non-empty");
            let mut d_z = (&d_norm - &mean_d - &(&cache.normalized * &mean_dx)) * &cache.inv_std;
            Zip::from(&mut d_z)
                .and(&cache.pre_activation)
                .for_each(|g, &z| {
                    if z <= 0.0 {
                        *g = 0.0
                    }
                });
            linear_grads[l] = Some(Linear {
                weight: d_z.t().dot(&cache.input),
                bias: d_z.sum_axis(Axis(0)),
            });
            norm_grads[l] = Some((d_scale, d_shift));
            if l > 0 {
                d_act = d_z.dot(&self.linears[l].weight);
            }
        }

        Ok(Gradients {
            linears: linear_grads.into_iter().map(|g| g.expect("filled")).collect(),
            norms: norm_grads.into_iter().map(|g| g.expect("filled")).collect(),
        })
    }

    /// Largest relative disagreement between [`Self::backward`] and central
    /// differences of the train-mode loss, over every trainable parameter.
    ///
    /// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
    pub fn gradient_check(&self, inputs: ArrayView2<'_, f64>, labels: &[u8], h: f64) -> Result<f64> {
        let pass = self.forward(inputs, Mode::Train)?;
        let analytic = self.backward(&pass, labels)?;
        let flat: Vec<f64> = analytic.slices().iter().flat_map(|s| s.iter().copied()).collect();
        let loss = |m: &MlpModel| -> Result<f64> {
            let p = m.forward(inputs, Mode::Train)?;
            super::bce_loss(p.predictions.view(), labels)
        };
        let mut probe = self.clone();
        let mut worst = 0.0f64;
        let mut k = 0;
        let n_tensors = probe.parameters_mut().len();
        for t in 0..n_tensors {
            let len = probe.parameters_mut()[t].len();
            for i in 0..len {
                let orig = probe.parameters_mut()[t][i];
                probe.parameters_mut()[t][i] = orig + h;
                let up = loss(&probe)?;
                probe.parameters_mut()[t][i] = orig - h;
                let down = loss(&probe)?;
                probe.parameters_mut()[t][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = flat[k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                k += 1;
            }
        }
        Ok(worst)
    }
}
