//! Dataset manifest (JSON) and the sp-annotation / ground-truth tables (CSV).

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::ims::ExperimentRecord;
use super::synth::TruthRow;
use super::DataError;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub snapshots: usize,
    #[serde(flatten)]
    pub record: ExperimentRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// Label normalization constant.
    pub label_t_max: f64,
    pub experiments: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(experiments: Vec<ExperimentRecord>, label_t_max: f64) -> Self {
        Self {
            version: MANIFEST_VERSION,
            label_t_max,
            experiments: experiments
                .into_iter()
                .map(|record| ManifestEntry {
                    snapshots: record.len(),
                    record,
                })
                .collect(),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = &ExperimentRecord> {
        self.experiments.iter().map(|e| &e.record)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| DataError::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        fs::write(path, text + "\n").map_err(|e| DataError::io(path, e))
    }

    /// Loads a manifest; relative experiment directories are resolved
    /// against the manifest's own directory.
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let mut manifest: Manifest = serde_json::from_str(&text).map_err(|e| DataError::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if manifest.version != MANIFEST_VERSION {
            return Err(DataError::Format {
                path: path.to_path_buf(),
                reason: format!("unsupported manifest version {}", manifest.version),
            });
        }
        let base = path.parent().unwrap_or(Path::new("."));
        for entry in &mut manifest.experiments {
            if entry.snapshots != entry.record.len() {
                return Err(DataError::Format {
                    path: path.to_path_buf(),
                    reason: format!("experiment {} lists {} files but claims {}", entry.record.id, entry.record.len(), entry.snapshots),
                });
            }
            if entry.record.directory.is_relative() {
                entry.record.directory = base.join(&entry.record.directory);
            }
        }
        Ok(manifest)
    }
}

/// One row of the sp-annotation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpRow {
    pub experiment: String,
    pub index: usize,
    pub timestamp: String,
    pub sp: usize,
    pub valid: bool,
    /// Failure causes of the invalid channels, `;`-separated.
    pub reason: String,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), DataError> {
    let err = |e: csv::Error| DataError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut writer = csv::Writer::from_path(path).map_err(err)?;
    for row in rows {
        writer.serialize(row).map_err(err)?;
    }
    writer.flush().map_err(|e| DataError::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| DataError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| DataError::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn write_sp_csv(path: &Path, rows: &[SpRow]) -> Result<(), DataError> {
    write_csv(path, rows)
}

pub fn read_sp_csv(path: &Path) -> Result<Vec<SpRow>, DataError> {
    read_csv(path)
}

pub fn write_truth_csv(path: &Path, rows: &[TruthRow]) -> Result<(), DataError> {
    write_csv(path, rows)
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<TruthRow>, DataError> {
    read_csv(path)
}
