//! `ambc`: command-line front end for the backscatter detection workbench.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use ambc::experiment::{
    csv_string, parse_channel_model, run_point, run_sweep, simulate_block, train_dnn, write_csv, ExperimentConfig,
};
use ambc::neuralnet::{load_checkpoint, save_checkpoint};
use ambc::{AmbcError, DetectorId, MlpModel, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ambc", version, about = "Ambient backscatter detection workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write raw received frames of one coherence block as CSV.
    Simulate(Common),
    /// Generate a dataset, train the detector network and save a checkpoint.
    Train(Common),
    /// Estimate BER of the selected detectors at one operating point.
    Evaluate(Common),
    /// Estimate BER over the SNR/eta/xi grids.
    Sweep(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// SNR in dB (comma-separated for a grid).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Vec<f64>,
    /// Relative backscatter strength (comma-separated for a grid).
    #[arg(long, value_delimiter = ',')]
    eta: Vec<f64>,
    /// Tag power reflection efficiency (comma-separated for a grid).
    #[arg(long, value_delimiter = ',')]
    xi: Vec<f64>,
    /// Samples per symbol.
    #[arg(long)]
    n: Option<usize>,
    /// Coherence blocks per point.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    bits_per_block: Option<usize>,
    /// ml, semicoh, ed, bayes, glrt, gmm or dnn (repeatable or comma-separated).
    #[arg(long, value_delimiter = ',')]
    detector: Vec<DetectorId>,
    /// rayleigh or rician.
    #[arg(long)]
    channel: Option<String>,
    /// Rician K-factor.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    workers: Option<usize>,
    /// Checkpoint to write (train) or read (dnn detector).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output file; CSV goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if !self.snr_db.is_empty() {
            cfg.snr_grid_db = self.snr_db.clone();
        }
        if !self.eta.is_empty() {
            cfg.eta_grid = self.eta.clone();
        }
        if !self.xi.is_empty() {
            cfg.xi_grid = self.xi.clone();
        }
        if !self.detector.is_empty() {
            cfg.detectors = self.detector.clone();
        }
        if let Some(v) = self.n {
            cfg.n_per_symbol = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.bits_per_block {
            cfg.bits_per_block = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        match (&self.channel, self.kappa) {
            (Some(name), kappa) => cfg.channel.model = parse_channel_model(name, kappa)?,
            (None, Some(kappa)) => cfg.channel.model = ambc::ChannelModel::Rician { kappa },
            (None, None) => {}
        }
        if self.model.is_some() {
            cfg.model = self.model.clone();
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_model(cfg: &ExperimentConfig) -> Result<Option<MlpModel>> {
    if !cfg.detectors.contains(&DetectorId::Dnn) {
        return Ok(None);
    }
    match &cfg.model {
        Some(path) => Ok(Some(load_checkpoint(path)?)),
        None => Err(AmbcError::MissingSideInfo(
            "the dnn detector needs a trained model checkpoint (--model)".into(),
        )),
    }
}

fn emit(cfg: &ExperimentConfig, text: &str) -> Result<()> {
    match &cfg.out {
        Some(path) => std::fs::write(path, text).map_err(|source| AmbcError::Io {
            path: path.clone(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn simulate(cfg: &ExperimentConfig) -> Result<()> {
    let point = cfg.point();
    let block = simulate_block(cfg, point, ambc::experiment::block_seed(cfg, point, 0))?;
    let mut s = String::from("frame,data_bit,symbol,sample,re,im\n");
    for (f, rx) in block.frames.iter().enumerate() {
        let n = rx.truth.n_per_symbol;
        for (k, y) in rx.samples.iter().enumerate() {
            let _ = writeln!(s, "{f},{},{},{},{:.16e},{:.16e}", rx.truth.data_bit, k / n, k % n, y.re, y.im);
        }
    }
    emit(cfg, &s)
}

fn train(cfg: &ExperimentConfig) -> Result<()> {
    let path = cfg.model.clone().unwrap_or_else(|| PathBuf::from("dnn.ckpt"));
    let point = cfg.point();
    eprintln!(
        "training at snr {} dB, eta {}, xi {}, n {} on {}/{}/{} samples",
        point.snr_db, point.eta, point.xi, cfg.n_per_symbol, cfg.dataset.train, cfg.dataset.val, cfg.dataset.test
    );
    let trained = train_dnn(cfg, point)?;
    let r = &trained.report;
    for e in 0..r.epochs() {
        eprintln!(
            "epoch {:>3}  train {:.5}  val {:.5}  lr {:.2e}",
            e + 1,
            r.train_loss[e],
            r.val_loss[e],
            r.learning_rates[e]
        );
    }
    save_checkpoint(&trained.model, &path)?;
    println!(
        "best epoch {}  val loss {:.5}  test loss {:.5}  test ber {:.5}  -> {}",
        r.best_epoch + 1,
        r.best_val_loss,
        trained.test_loss,
        trained.test_error,
        path.display()
    );
    Ok(())
}

fn evaluate(cfg: &ExperimentConfig) -> Result<()> {
    let model = load_model(cfg)?;
    let records = run_point(cfg, cfg.point(), &cfg.detectors, model.as_ref())?;
    match &cfg.out {
        Some(path) => write_csv(path, &records),
        None => emit(cfg, &csv_string(&records)),
    }
}

fn sweep(cfg: &ExperimentConfig) -> Result<()> {
    let model = load_model(cfg)?;
    let records = run_sweep(cfg, model.as_ref())?;
    if cfg.out.is_none() {
        print!("{}", csv_string(&records));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => c.resolve().and_then(|cfg| simulate(&cfg)),
        Command::Train(c) => c.resolve().and_then(|cfg| train(&cfg)),
        Command::Evaluate(c) => c.resolve().and_then(|cfg| evaluate(&cfg)),
        Command::Sweep(c) => c.resolve().and_then(|cfg| sweep(&cfg)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                AmbcError::Config(_) | AmbcError::InvalidParameter(_) | AmbcError::MissingSideInfo(_) => 2,
                _ => 1,
            })
        }
    }
}
