//! Dataset ingestion, labelling, splitting, scaling and synthetic data.

mod dataset;
mod ims;
mod manifest;
mod prep;
mod synth;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use dataset::{extract_experiment_sp, write_synthetic, Dataset, Sample};
pub use ims::{
    apply_channel_map, default_channel_map, format_timestamp, ingest_ims, parse_timestamp, read_ims_file,
    write_ims_file, ChannelGroup, ExperimentRecord, IngestOptions, IMS_ROWS, IMS_SAMPLING_HZ,
};
pub use manifest::{
    read_csv, read_sp_csv, read_truth_csv, write_csv, write_sp_csv, write_truth_csv, Manifest, ManifestEntry, SpRow,
    MANIFEST_VERSION,
};
pub use prep::{
    concat_split, label_rul, SplitSpec, Stratification, ZScore, ZScoreAccumulator, DEFAULT_LABEL_T_MAX, STD_FLOOR,
};
pub use synth::{dip_signature, synth_bearing, SynthOutput, SynthSpec, TruthRow};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {reason}", path.display())]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("{}: expected {expected} rows, found {actual}", path.display())]
    RowCount { path: PathBuf, expected: usize, actual: usize },
    #[error("{}:{line}: expected {expected} channels, found {actual}", path.display())]
    ChannelCount {
        path: PathBuf,
        line: usize,
        expected: usize,
        actual: usize,
    },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("experiment of {len} snapshots exceeds the label normalization {t_max}")]
    LabelOverflow { len: usize, t_max: f64 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("{0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
