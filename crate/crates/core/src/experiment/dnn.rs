use super::config::{ExperimentConfig, OperatingPoint};
use super::dataset::generate_dataset;
use super::seed::derive_seed;
use crate::error::Result;
use crate::neuralnet::{error_rate, evaluate_loss, train, MlpModel, TrainReport};
use crate::rng_from_seed;

/// A detector network trained for one operating point.
#[derive(Debug, Clone)]
pub struct TrainedDnn {
    pub model: MlpModel,
    pub report: TrainReport,
    pub test_loss: f64,
    /// Bit error rate on the held-out test split.
    pub test_error: f64,
}

/// Generates the three splits at `point`, trains a fresh network and scores it on the test split.
pub fn train_dnn(cfg: &ExperimentConfig, point: OperatingPoint) -> Result<TrainedDnn> {
    cfg.validate()?;
    let d = cfg.dataset;
    let (train_set, val_set, test_set) = generate_dataset(cfg, point, (d.train, d.val, d.test))?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &["train".into(), "init".into()]));
    let mut model = MlpModel::new(cfg.mlp_config(), &mut rng)?;
    let report = train(&mut model, &train_set.set, &val_set.set, &cfg.train_config())?;
    drop((train_set, val_set));
    Ok(TrainedDnn {
        test_loss: evaluate_loss(&model, &test_set.set)?,
        test_error: error_rate(&model, &test_set.set)?,
        model,
        report,
    })
}
