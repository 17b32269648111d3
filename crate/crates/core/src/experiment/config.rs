//! Experiment configuration and its TOML file form.
//!
//! ```toml
//! n = 40                   # samples per symbol
//! snr_db = [0, 5, 10, 15]  # a number or a list; likewise eta and xi
//! eta = 0.5
//! xi = 1.0
//! trials = 1000            # coherence blocks per point
//! bits_per_block = 100
//! seed = 42
//! workers = 0              # 0: one per core
//! detectors = ["ml", "ed", "semicoh"]
//! record_wall_time = true
//! noise_variance = 1.0
//! model = "dnn.ckpt"       # checkpoint for the dnn detector
//! out = "ber.csv"
//!
//! [channel]
//! model = "rician"         # or "rayleigh"
//! kappa = 3.0
//! sigma2_sr = 1.0
//! sigma2_st = 1.0
//! sigma2_tr = 1.0
//!
//! [source]
//! kind = "gaussian"        # or "psk" with `order`
//! power = 1.0
//!
//! [detector]
//! training_frames = 2      # pilot frames per block for semicoh/gmm
//! prior_samples = 16384
//! quadrature_nodes = 1024
//! gmm_max_iter = 200
//! gmm_tol = 1e-8
//!
//! [dataset]
//! train = 80000
//! val = 24000
//! test = 24000
//!
//! [training]
//! hidden = [512, 256, 128]
//! learning_rate = 1e-3
//! batch_size = 256
//! max_epochs = 50
//! patience = 5
//! lr_decay_factor = 0.5
//! beta1 = 0.9
//! beta2 = 0.999
//! adam_epsilon = 1e-8
//! ```
//!
//! Every key is optional; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::seed::derive_seed;
use crate::airlink::SourceKind;
use crate::channel::{ChannelModel, ChannelParams};
use crate::detectors::{DetectorId, PriorModel};
use crate::error::{AmbcError, Result};
use crate::neuralnet::{MlpConfig, TrainConfig};

/// Train/validation/test sample counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for DatasetSizes {
    fn default() -> Self {
        Self {
            train: 80_000,
            val: 24_000,
            test: 24_000,
        }
    }
}

/// One `(snr, eta, xi)` grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub snr_db: f64,
    pub eta: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_per_symbol: usize,
    pub snr_grid_db: Vec<f64>,
    pub eta_grid: Vec<f64>,
    pub xi_grid: Vec<f64>,
    pub channel: ChannelParams,
    pub source: SourceKind,
    pub noise_variance: f64,
    pub detectors: Vec<DetectorId>,
    pub trials: usize,
    pub bits_per_block: usize,
    pub training_frames: usize,
    pub prior_samples: usize,
    pub quadrature_nodes: usize,
    pub gmm_max_iter: usize,
    pub gmm_tol: f64,
    pub seed: u64,
    /// Worker threads for Monte-Carlo blocks; 0 picks one per core.
    pub workers: usize,
    /// When false the `wall_time_ms` column is written as 0 so that CSVs are byte-reproducible.
    pub record_wall_time: bool,
    pub dataset: DatasetSizes,
    pub hidden_dims: Vec<usize>,
    pub train: TrainConfig,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_per_symbol: 40,
            snr_grid_db: vec![10.0],
            eta_grid: vec![0.5],
            xi_grid: vec![1.0],
            channel: ChannelParams::default(),
            source: SourceKind::ComplexGaussian { power: 1.0 },
            noise_variance: 1.0,
            detectors: vec![DetectorId::Ml],
            trials: 1000,
            bits_per_block: 100,
            training_frames: 2,
            prior_samples: PriorModel::DEFAULT_SAMPLES,
            quadrature_nodes: PriorModel::DEFAULT_QUADRATURE_NODES,
            gmm_max_iter: 200,
            gmm_tol: 1e-8,
            seed: 0,
            workers: 0,
            record_wall_time: true,
            dataset: DatasetSizes::default(),
            hidden_dims: MlpConfig::DEFAULT_HIDDEN.to_vec(),
            train: TrainConfig::default(),
            model: None,
            out: None,
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> AmbcError {
    AmbcError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        let cfg = raw.into_config()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| AmbcError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            AmbcError::Config(msg) => cfg_err(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// First value of every grid.
    pub fn point(&self) -> OperatingPoint {
        OperatingPoint {
            snr_db: self.snr_grid_db[0],
            eta: self.eta_grid[0],
            xi: self.xi_grid[0],
        }
    }

    /// Grid product in `snr`, `eta`, `xi` order (last axis fastest).
    pub fn points(&self) -> Vec<OperatingPoint> {
        let mut out = Vec::new();
        for &snr_db in &self.snr_grid_db {
            for &eta in &self.eta_grid {
                for &xi in &self.xi_grid {
                    out.push(OperatingPoint { snr_db, eta, xi });
                }
            }
        }
        out
    }

    pub fn mlp_config(&self) -> MlpConfig {
        let mut c = MlpConfig::for_frame(self.n_per_symbol);
        c.hidden_dims = self.hidden_dims.clone();
        c
    }

    /// Training options with the shuffle seed tied to the master seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.seed, &["train".into(), "shuffle".into()]),
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_symbol == 0 {
            return Err(cfg_err("n must be >= 1"));
        }
        if self.trials == 0 {
            return Err(cfg_err("trials must be >= 1"));
        }
        if self.bits_per_block == 0 {
            return Err(cfg_err("bits_per_block must be >= 1"));
        }
        if self.detectors.contains(&DetectorId::SemiCoh) && self.bits_per_block % 2 != 0 {
            return Err(cfg_err("the semicoh detector needs an even bits_per_block"));
        }
        if self.training_frames == 0 || self.training_frames > self.bits_per_block {
            return Err(cfg_err("training_frames must be in 1..=bits_per_block"));
        }
        if self.snr_grid_db.is_empty() || self.eta_grid.is_empty() || self.xi_grid.is_empty() {
            return Err(cfg_err("snr_db, eta and xi need at least one value each"));
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(cfg_err("snr_db values must be finite"));
        }
        if self.eta_grid.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
            return Err(cfg_err("eta values must be finite and >= 0"));
        }
        if self.xi_grid.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
            return Err(cfg_err("xi values must be in (0, 1]"));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(cfg_err("noise_variance must be positive"));
        }
        if self.detectors.is_empty() {
            return Err(cfg_err("at least one detector is required"));
        }
        if self.prior_samples < 2 || self.quadrature_nodes < 64 {
            return Err(cfg_err("prior_samples must be >= 2 and quadrature_nodes >= 64"));
        }
        if self.gmm_max_iter == 0 || !(self.gmm_tol > 0.0) {
            return Err(cfg_err("gmm_max_iter must be >= 1 and gmm_tol positive"));
        }
        let d = self.dataset;
        if d.train == 0 || d.val == 0 || d.test == 0 {
            return Err(cfg_err("dataset sizes must be positive"));
        }
        self.channel.validate().map_err(|e| cfg_err(e.to_string()))?;
        self.source.validate().map_err(|e| cfg_err(e.to_string()))?;
        self.mlp_config().validate().map_err(|e| cfg_err(e.to_string()))?;
        self.train.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Grid {
    One(f64),
    Many(Vec<f64>),
}

impl Grid {
    fn into_vec(self) -> Vec<f64> {
        match self {
            Grid::One(v) => vec![v],
            Grid::Many(v) => v,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n: Option<usize>,
    snr_db: Option<Grid>,
    eta: Option<Grid>,
    xi: Option<Grid>,
    trials: Option<usize>,
    bits_per_block: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    detectors: Option<Vec<String>>,
    record_wall_time: Option<bool>,
    noise_variance: Option<f64>,
    model: Option<PathBuf>,
    out: Option<PathBuf>,
    channel: Option<RawChannel>,
    source: Option<RawSource>,
    detector: Option<RawDetector>,
    dataset: Option<RawDataset>,
    training: Option<RawTraining>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    model: Option<String>,
    kappa: Option<f64>,
    sigma2_sr: Option<f64>,
    sigma2_st: Option<f64>,
    sigma2_tr: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    kind: Option<String>,
    order: Option<u32>,
    power: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    training_frames: Option<usize>,
    prior_samples: Option<usize>,
    quadrature_nodes: Option<usize>,
    gmm_max_iter: Option<usize>,
    gmm_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    train: Option<usize>,
    val: Option<usize>,
    test: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    hidden: Option<Vec<usize>>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    lr_decay_factor: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    adam_epsilon: Option<f64>,
}

/// Parses `rayleigh` or `rician` (the latter needs `kappa`).
pub fn parse_channel_model(name: &str, kappa: Option<f64>) -> Result<ChannelModel> {
    match name.trim().to_ascii_lowercase().as_str() {
        "rayleigh" => Ok(ChannelModel::Rayleigh),
        "rician" => {
            let kappa = kappa.ok_or_else(|| cfg_err("the rician channel needs kappa"))?;
            Ok(ChannelModel::Rician { kappa })
        }
        other => Err(cfg_err(format!("unknown channel model '{other}' (expected rayleigh or rician)"))),
    }
}

impl RawConfig {
    fn into_config(self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::default();
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(c.n_per_symbol, self.n);
        set!(c.snr_grid_db, self.snr_db.map(Grid::into_vec));
        set!(c.eta_grid, self.eta.map(Grid::into_vec));
        set!(c.xi_grid, self.xi.map(Grid::into_vec));
        set!(c.trials, self.trials);
        set!(c.bits_per_block, self.bits_per_block);
        set!(c.seed, self.seed);
        set!(c.workers, self.workers);
        set!(c.record_wall_time, self.record_wall_time);
        set!(c.noise_variance, self.noise_variance);
        c.model = self.model;
        c.out = self.out;
        if let Some(names) = self.detectors {
            c.detectors = names.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        if let Some(ch) = self.channel {
            set!(c.channel.sigma2_sr, ch.sigma2_sr);
            set!(c.channel.sigma2_st, ch.sigma2_st);
            set!(c.channel.sigma2_tr, ch.sigma2_tr);
            match ch.model {
                Some(name) => c.channel.model = parse_channel_model(&name, ch.kappa)?,
                None if ch.kappa.is_some() => return Err(cfg_err("kappa given without channel.model = \"rician\"")),
                None => {}
            }
        }
        if let Some(src) = self.source {
            let power = src.power.unwrap_or(1.0);
            c.source = match src.kind.as_deref().unwrap_or("gaussian") {
                "gaussian" => {
                    if src.order.is_some() {
                        return Err(cfg_err("source.order only applies to kind = \"psk\""));
                    }
                    SourceKind::ComplexGaussian { power }
                }
                "psk" => SourceKind::ModulatedQary {
                    q: src.order.ok_or_else(|| cfg_err("psk source needs source.order"))?,
                    power,
                },
                other => return Err(cfg_err(format!("unknown source kind '{other}' (expected gaussian or psk)"))),
            };
        }
        if let Some(d) = self.detector {
            set!(c.training_frames, d.training_frames);
            set!(c.prior_samples, d.prior_samples);
            set!(c.quadrature_nodes, d.quadrature_nodes);
            set!(c.gmm_max_iter, d.gmm_max_iter);
            set!(c.gmm_tol, d.gmm_tol);
        }
        if let Some(d) = self.dataset {
            set!(c.dataset.train, d.train);
            set!(c.dataset.val, d.val);
            set!(c.dataset.test, d.test);
        }
        if let Some(t) = self.training {
            set!(c.hidden_dims, t.hidden);
            set!(c.train.learning_rate, t.learning_rate);
            set!(c.train.batch_size, t.batch_size);
            set!(c.train.max_epochs, t.max_epochs);
            set!(c.train.patience, t.patience);
            set!(c.train.lr_decay_factor, t.lr_decay_factor);
            set!(c.train.beta1, t.beta1);
            set!(c.train.beta2, t.beta2);
            set!(c.train.adam_epsilon, t.adam_epsilon);
        }
        Ok(c)
    }
}
