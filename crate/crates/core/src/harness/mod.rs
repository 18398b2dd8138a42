//! Experiment orchestration: configuration, datasets, sweeps and reports.

mod config;
mod dataset;
mod experiments;
mod report;

pub use config::{
    Config, DeviceSection, EnergySection, ExperimentConfig, FaultSection, Mode, ProfileOverride, RunCondition,
    SolarGrid, DEFAULT_SUNS,
};
pub use dataset::{
    encode_idx_images, encode_idx_labels, load_idx_dataset, parse_idx_images, parse_idx_labels, Dataset, DatasetError,
    IMAGES_MAGIC, LABELS_MAGIC,
};
pub use experiments::{
    accuracy_csv, binarize_dataset, energy_breakdown_csv, energy_csv, infer_tile_image, load_model, operating_points_csv, pattern_csv,
    program_tile_image, run_accuracy, run_accuracy_with, run_energy, run_pattern_experiment, run_solar_sweep, schmoo_csv, solar_csv,
    wilson_interval, AccuracyResult, AccuracyRow, DeltaRow, EnergyResult, EnergyRow, InferResult, PatternResult,
    ProgramResult, SchmooRow, SolarResult, SolarRow, ACCURACY_CSV_HEADER, PATTERN_CSV_HEADER, SCHMOO_CSV_HEADER,
    SOLAR_CSV_HEADER,
};
pub use report::{emit_report, manifest_text, sha256_hex, Report, MANIFEST_NAME};

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Dataset(#[from] DatasetError),
    #[error("model error: {0}")]
    Model(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("simulation error: {0}")]
    Sim(String),
}

impl HarnessError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for bad data or
    /// models, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Dataset(_) | HarnessError::Model(_) => 3,
            HarnessError::Io { .. } | HarnessError::Sim(_) => 1,
        }
    }
}

macro_rules! sim_error {
    ($($t:ty),*) => {$(
        impl From<$t> for HarnessError {
            fn from(e: $t) -> Self {
                HarnessError::Sim(e.to_string())
            }
        }
    )*};
}

sim_error!(
    crate::pipeline::PipelineError,
    crate::tile::TileError,
    crate::device::DeviceError,
    crate::fault::FaultError,
    crate::power::PowerError
);

impl From<crate::mapper::MapperError> for HarnessError {
    fn from(e: crate::mapper::MapperError) -> Self {
        use crate::mapper::MapperError as M;
        match e {
            M::Pipeline(_) | M::Tile(_) | M::Fault(_) => HarnessError::Sim(e.to_string()),
            other => HarnessError::Model(other.to_string()),
        }
    }
}
