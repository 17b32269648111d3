use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use super::ber::{run_point, BerRecord};
use super::config::ExperimentConfig;
use crate::error::{AmbcError, Result};
use crate::neuralnet::MlpModel;

pub const CSV_HEADER: &str = "detector,snr_db,eta,xi,n,trials,bits,errors,abstains,ber,seed,wall_time_ms";

/// Every configured detector at every grid point.
///
/// Records are ordered by detector (in config order), then by point in
/// `snr`, `eta`, `xi` order. If `cfg.out` is set the CSV is written there.
pub fn run_sweep(cfg: &ExperimentConfig, model: Option<&MlpModel>) -> Result<Vec<BerRecord>> {
    cfg.validate()?;
    let points = cfg.points();
    let mut by_point = Vec::with_capacity(points.len());
    for &p in &points {
        by_point.push(run_point(cfg, p, &cfg.detectors, model)?);
    }
    let mut records = Vec::with_capacity(points.len() * cfg.detectors.len());
    for d in 0..cfg.detectors.len() {
        for recs in &by_point {
            records.push(recs[d].clone());
        }
    }
    if let Some(path) = &cfg.out {
        write_csv(path, &records)?;
    }
    Ok(records)
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_string(records: &[BerRecord]) -> String {
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.detector,
            real(r.snr_db),
            real(r.eta),
            real(r.xi),
            r.n,
            r.trials,
            r.bits,
            r.errors,
            r.abstains,
            real(r.ber),
            r.seed,
            real(r.wall_time_ms),
        );
    }
    s
}

/// Writes the records through a temporary file that is renamed into place.
pub fn write_csv(path: &Path, records: &[BerRecord]) -> Result<()> {
    let io = |source| AmbcError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(csv_string(records).as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
