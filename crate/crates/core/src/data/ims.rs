//! IMS-layout vibration directories: one ASCII file per snapshot, named by
//! its timestamp, with one tab-separated row of channel readings per sample.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::DataError;

pub const IMS_ROWS: usize = 20_480;
pub const IMS_SAMPLING_HZ: f64 = 20_000.0;
const TIMESTAMP_FORMAT: &str = "%Y.%m.%d.%H.%M.%S";

pub fn parse_timestamp(name: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(name, TIMESTAMP_FORMAT).ok()
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

/// Raw channels averaged into one effective input channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelGroup {
    pub name: String,
    /// Zero-based raw channel indices.
    pub sources: Vec<usize>,
}

/// One channel per bearing. Eight raw channels (two accelerometers per
/// bearing) are paired when `average_pairs` is set.
pub fn default_channel_map(raw_channels: usize, average_pairs: bool) -> Vec<ChannelGroup> {
    if average_pairs && raw_channels == 8 {
        (0..raw_channels / 2)
            .map(|b| ChannelGroup {
                name: format!("bearing{}", b + 1),
                sources: vec![2 * b, 2 * b + 1],
            })
            .collect()
    } else {
        (0..raw_channels)
            .map(|c| ChannelGroup {
                name: format!("bearing{}", c + 1),
                sources: vec![c],
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Exact number of rows required in every file.
    pub rows: usize,
    /// Average channel pairs of 8-channel recordings into 4 bearings;
    /// other layouts map one channel per bearing.
    pub average_pairs: bool,
    pub sampling_hz: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            rows: IMS_ROWS,
            average_pairs: true,
            sampling_hz: IMS_SAMPLING_HZ,
        }
    }
}

/// A validated run-to-failure experiment. Windows are read from disk on
/// demand; ingestion only validates them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub id: String,
    pub directory: PathBuf,
    /// File names, in timestamp order.
    pub files: Vec<String>,
    pub rows: usize,
    pub raw_channels: usize,
    pub channel_map: Vec<ChannelGroup>,
    pub sampling_hz: f64,
}

impl ExperimentRecord {
    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channel_map.len()
    }

    pub fn timestamp(&self, index: usize) -> &str {
        &self.files[index]
    }

    pub fn path(&self, index: usize) -> PathBuf {
        self.directory.join(&self.files[index])
    }

    /// Effective channels of snapshot `index`, channel-major
    /// (`channels × rows`).
    pub fn load_window(&self, index: usize) -> Result<Vec<f64>, DataError> {
        let raw = read_ims_file(&self.path(index), Some(self.rows), Some(self.raw_channels))?;
        Ok(apply_channel_map(&raw, self.rows, self.raw_channels, &self.channel_map))
    }
}

/// Row-major raw matrix (`rows × raw_channels`) to channel-major averaged
/// groups.
pub fn apply_channel_map(raw: &[f64], rows: usize, raw_channels: usize, map: &[ChannelGroup]) -> Vec<f64> {
    let mut out = vec![0.0; map.len() * rows];
    for (g, group) in map.iter().enumerate() {
        let scale = 1.0 / group.sources.len() as f64;
        let dst = &mut out[g * rows..(g + 1) * rows];
        for (r, d) in dst.iter_mut().enumerate() {
            *d = group.sources.iter().map(|&c| raw[r * raw_channels + c]).sum::<f64>() * scale;
        }
    }
    out
}

/// Reads one snapshot as a row-major matrix, checking the row and channel
/// counts when given.
pub fn read_ims_file(path: &Path, rows: Option<usize>, channels: Option<usize>) -> Result<Vec<f64>, DataError> {
    let file = fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut data = Vec::with_capacity(rows.unwrap_or(IMS_ROWS) * channels.unwrap_or(4));
    let mut width = channels;
    let mut count = 0;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DataError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split_whitespace() {
            let value: f64 = field.parse().map_err(|_| DataError::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                reason: format!("not a number: {field:?}"),
            })?;
            data.push(value);
        }
        let got = data.len() - before;
        match width {
            Some(w) if w != got => {
                return Err(DataError::ChannelCount {
                    path: path.to_path_buf(),
                    line: n + 1,
                    expected: w,
                    actual: got,
                })
            }
            None => width = Some(got),
            _ => {}
        }
        count += 1;
    }
    if let Some(expected) = rows {
        if count != expected {
            return Err(DataError::RowCount {
                path: path.to_path_buf(),
                expected,
                actual: count,
            });
        }
    }
    if count == 0 {
        return Err(DataError::RowCount {
            path: path.to_path_buf(),
            expected: rows.unwrap_or(1),
            actual: 0,
        });
    }
    Ok(data)
}

/// Writes a row-major matrix in the IMS text layout. Values use the shortest
/// round-trip representation, so reading back is exact.
pub fn write_ims_file(path: &Path, data: &[f64], channels: usize) -> Result<(), DataError> {
    let file = fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for row in data.chunks(channels) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join("\t")).map_err(|e| DataError::io(path, e))?;
    }
    out.flush().map_err(|e| DataError::io(path, e))
}

/// Validates every file of an IMS directory and returns the experiment.
pub fn ingest_ims(directory: &Path, options: &IngestOptions) -> Result<ExperimentRecord, DataError> {
    let entries = fs::read_dir(directory).map_err(|e| DataError::io(directory, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| DataError::io(directory, e))?;
        if !entry.file_type().map_err(|e| DataError::io(&entry.path(), e))?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        // Sidecar files (manifests, truth tables) are not snapshots.
        if let Some(ts) = parse_timestamp(&name) {
            files.push((ts, name));
        }
    }
    if files.is_empty() {
        return Err(DataError::Empty("no timestamped files in directory"));
    }
    files.sort();
    if let Some(pair) = files.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(DataError::Invalid(format!("duplicate timestamp {}", pair[1].1)));
    }

    let first = directory.join(&files[0].1);
    let raw = read_ims_file(&first, Some(options.rows), None)?;
    let raw_channels = raw.len() / options.rows;
    for (_, name) in &files[1..] {
        read_ims_file(&directory.join(name), Some(options.rows), Some(raw_channels))?;
    }

    let id = directory
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".to_string());
    Ok(ExperimentRecord {
        id,
        directory: directory.to_path_buf(),
        files: files.into_iter().map(|(_, n)| n).collect(),
        rows: options.rows,
        raw_channels,
        channel_map: default_channel_map(raw_channels, options.average_pairs),
        sampling_hz: options.sampling_hz,
    })
}
