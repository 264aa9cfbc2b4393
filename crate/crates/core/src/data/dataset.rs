//! Training samples assembled from a manifest and its sp annotations.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::ims::{default_channel_map, write_ims_file, ExperimentRecord};
use super::manifest::{write_truth_csv, Manifest, SpRow};
use super::prep::label_rul;
use super::synth::{synth_bearing, SynthSpec};
use super::DataError;
use crate::sigproc::{aggregate_channels, extract_sp, SignalWindow, SpallDetectionConfig};

/// Windows up to this total size are kept in memory.
const PRELOAD_BUDGET_BYTES: usize = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    /// Position of the experiment in the manifest.
    pub experiment: usize,
    /// Snapshot index within the experiment.
    pub index: usize,
    /// Spall-passage samples; zero when no channel was valid.
    pub sp: f64,
    pub sp_valid: bool,
    /// Normalized remaining life.
    pub y: f64,
}

#[derive(Clone, Debug)]
enum Storage {
    Memory(Vec<Vec<f64>>),
    Disk(Vec<ExperimentRecord>),
}

/// Labelled samples with lazily or eagerly loaded channel-major windows.
#[derive(Clone, Debug)]
pub struct Dataset {
    samples: Vec<Sample>,
    lengths: Vec<usize>,
    channels: usize,
    rows: usize,
    sampling_hz: f64,
    storage: Storage,
}

impl Dataset {
    /// Labels every snapshot of the manifest and joins the sp table by
    /// (experiment, index). Without a table every `sp` is zero.
    pub fn from_manifest(manifest: &Manifest, sp_rows: Option<&[SpRow]>) -> Result<Self, DataError> {
        let records: Vec<ExperimentRecord> = manifest.records().cloned().collect();
        let first = records.first().ok_or(DataError::Empty("manifest lists no experiments"))?;
        let (channels, rows, sampling_hz) = (first.channels(), first.rows, first.sampling_hz);
        if let Some(r) = records.iter().find(|r| r.channels() != channels || r.rows != rows) {
            return Err(DataError::Invalid(format!(
                "experiment {} has shape {}x{}, expected {channels}x{rows}",
                r.id,
                r.channels(),
                r.rows
            )));
        }

        let sp_index: Option<HashMap<(&str, usize), &SpRow>> =
            sp_rows.map(|rows| rows.iter().map(|r| ((r.experiment.as_str(), r.index), r)).collect());
        let mut samples = Vec::new();
        let mut lengths = Vec::new();
        for (e, record) in records.iter().enumerate() {
            let labels = label_rul(record.len(), manifest.label_t_max)?;
            lengths.push(labels.len());
            for (index, y) in labels.into_iter().enumerate() {
                let (sp, sp_valid) = match &sp_index {
                    None => (0.0, false),
                    Some(map) => {
                        let row = map.get(&(record.id.as_str(), index)).ok_or_else(|| {
                            DataError::Invalid(format!("sp table has no row for {} #{index}", record.id))
                        })?;
                        (if row.valid { row.sp as f64 } else { 0.0 }, row.valid)
                    }
                };
                samples.push(Sample {
                    experiment: e,
                    index,
                    sp,
                    sp_valid,
                    y,
                });
            }
        }

        let total = samples.len() * channels * rows * std::mem::size_of::<f64>();
        let mut dataset = Self {
            samples,
            lengths,
            channels,
            rows,
            sampling_hz,
            storage: Storage::Disk(records),
        };
        if total <= PRELOAD_BUDGET_BYTES {
            let windows = (0..dataset.len())
                .map(|i| dataset.window(i).map(Cow::into_owned))
                .collect::<Result<_, _>>()?;
            dataset.storage = Storage::Memory(windows);
        }
        Ok(dataset)
    }

    /// Builds a dataset directly from channel-major windows.
    pub fn from_windows(
        windows: Vec<Vec<f64>>,
        channels: usize,
        sampling_hz: f64,
        sp: &[f64],
        y: &[f64],
    ) -> Result<Self, DataError> {
        let rows = windows.first().map_or(0, Vec::len) / channels.max(1);
        if windows.is_empty() || rows == 0 {
            return Err(DataError::Empty("no windows"));
        }
        if sp.len() != windows.len() || y.len() != windows.len() || windows.iter().any(|w| w.len() != channels * rows) {
            return Err(DataError::Invalid("window, sp and label counts or shapes disagree".into()));
        }
        let samples = sp
            .iter()
            .zip(y)
            .enumerate()
            .map(|(index, (&sp, &y))| Sample {
                experiment: 0,
                index,
                sp,
                sp_valid: sp > 0.0,
                y,
            })
            .collect();
        Ok(Self {
            samples,
            lengths: vec![windows.len()],
            channels,
            rows,
            sampling_hz,
            storage: Storage::Memory(windows),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &Sample {
        &self.samples[i]
    }

    /// Snapshot counts per experiment, in concatenation order.
    pub fn experiment_lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn sampling_hz(&self) -> f64 {
        self.sampling_hz
    }

    /// Unscaled channel-major window of sample `i`.
    pub fn window(&self, i: usize) -> Result<Cow<'_, [f64]>, DataError> {
        match &self.storage {
            Storage::Memory(windows) => Ok(Cow::Borrowed(&windows[i])),
            Storage::Disk(records) => {
                let s = &self.samples[i];
                records[s.experiment].load_window(s.index).map(Cow::Owned)
            }
        }
    }
}

/// Runs sp extraction on every snapshot and channel of an experiment.
pub fn extract_experiment_sp(record: &ExperimentRecord, config: &SpallDetectionConfig) -> Result<Vec<SpRow>, DataError> {
    let mut rows = Vec::with_capacity(record.len());
    for index in 0..record.len() {
        let window = record.load_window(index)?;
        let mut observations = Vec::with_capacity(record.channels());
        for (group, samples) in record.channel_map.iter().zip(window.chunks(record.rows)) {
            let signal = SignalWindow::new(samples.to_vec(), record.sampling_hz, group.name.clone())
                .map_err(|e| DataError::Invalid(e.to_string()))?;
            observations.push(extract_sp(&signal, config));
        }
        let (sp, valid) = aggregate_channels(&observations);
        let reason = record
            .channel_map
            .iter()
            .zip(&observations)
            .filter_map(|(g, o)| o.reason.as_ref().map(|r| format!("{}: {r}", g.name)))
            .collect::<Vec<_>>()
            .join("; ");
        rows.push(SpRow {
            experiment: record.id.clone(),
            index,
            timestamp: record.timestamp(index).to_string(),
            sp,
            valid,
            reason,
        });
    }
    Ok(rows)
}

/// Writes a synthetic experiment as an IMS-layout directory, together with
/// `truth.csv` and `manifest.json`, and returns the manifest.
pub fn write_synthetic(spec: &SynthSpec, seed: u64, dir: &Path) -> Result<Manifest, DataError> {
    let out = synth_bearing(spec, seed)?;
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let n = spec.window_len;
    let mut files = Vec::with_capacity(out.windows.len());
    for (window, truth) in out.windows.iter().zip(&out.truth) {
        let mut row_major = vec![0.0; window.len()];
        for (c, channel) in window.chunks(n).enumerate() {
            for (r, &v) in channel.iter().enumerate() {
                row_major[r * spec.channels + c] = v;
            }
        }
        write_ims_file(&dir.join(&truth.timestamp), &row_major, spec.channels)?;
        files.push(truth.timestamp.clone());
    }
    write_truth_csv(&dir.join("truth.csv"), &out.truth)?;
    let record = ExperimentRecord {
        id: spec.experiment.clone(),
        directory: ".".into(),
        files,
        rows: n,
        raw_channels: spec.channels,
        channel_map: default_channel_map(spec.channels, false),
        sampling_hz: spec.sampling_hz,
    };
    let manifest = Manifest::new(vec![record], spec.label_t_max);
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}
