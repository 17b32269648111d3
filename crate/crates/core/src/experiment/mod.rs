//! Monte-Carlo experiments: datasets, BER points, sweeps and their output.

mod ber;
mod config;
mod dataset;
mod dnn;
mod seed;
mod sweep;

pub use ber::{block_seed, point_prior, run_ber_point, run_point, simulate_block, BerRecord, Block};
pub use config::{parse_channel_model, DatasetSizes, ExperimentConfig, OperatingPoint};
pub use dataset::{generate_dataset, sample_seed, Dataset, SampleMeta};
pub use dnn::{train_dnn, TrainedDnn};
pub use seed::{derive_seed, SeedLabel};
pub use sweep::{csv_string, run_sweep, write_csv, CSV_HEADER};
