//! Synthetic run-to-failure vibration with planted spall signatures.
//!
//! Each faulted window carries a smooth acceleration dip whose shape puts
//! the entry-point estimate exactly at the planted entry sample, followed by
//! an impulse `sp` samples later; `sp` grows geometrically from the fault
//! onset, matching the exponential spall-growth law.

use chrono::{Duration, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ims::{format_timestamp, parse_timestamp};
use super::prep::label_rul;
use super::DataError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub experiment: String,
    /// Number of snapshots.
    pub length: usize,
    pub window_len: usize,
    pub channels: usize,
    pub sampling_hz: f64,
    /// Standard deviation of the white background noise, g.
    pub noise_std: f64,
    /// First faulted snapshot; earlier snapshots are noise only.
    pub fault_onset: usize,
    /// `sp` at the onset snapshot, samples.
    pub initial_sp: f64,
    /// Per-snapshot geometric growth of `sp`.
    pub growth_rate: f64,
    /// Depth of the acceleration dip at its minimum, g.
    pub dip_depth: f64,
    /// Entry samples are drawn uniformly from `[entry_min, entry_max]`.
    pub entry_min: usize,
    pub entry_max: usize,
    /// Position of the dip minimum as a fraction of the entry time.
    pub dip_fraction: f64,
    /// Speed factor the dip is shaped for; must match extraction.
    pub psi: f64,
    pub impulse_amplitude: f64,
    /// Channel carrying the fault; the others are noise only.
    pub fault_channel: usize,
    pub start: String,
    pub interval_s: i64,
    /// Normalization constant of the ground-truth labels.
    pub label_t_max: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            experiment: "synthetic".into(),
            length: 520,
            window_len: 1024,
            channels: 1,
            sampling_hz: 20_000.0,
            noise_std: 0.05,
            fault_onset: 0,
            initial_sp: 120.0,
            growth_rate: 0.003,
            dip_depth: 1.0,
            entry_min: 150,
            entry_max: 250,
            dip_fraction: 0.6,
            psi: 2.0,
            impulse_amplitude: 5.0,
            fault_channel: 0,
            start: "2004.02.12.10.32.39".into(),
            interval_s: 600,
            label_t_max: 600.0,
        }
    }
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        toml::from_str(text).map_err(|e| DataError::Invalid(format!("synthetic spec: {}", e.message())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec is always representable")
    }

    /// Planted (unrounded) `sp` at snapshot `index`, or `None` before onset.
    pub fn sp_at(&self, index: usize) -> Option<f64> {
        (index >= self.fault_onset)
            .then(|| self.initial_sp * (1.0 + self.growth_rate).powi((index - self.fault_onset) as i32))
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Invalid(format!("synthetic spec: {m}")));
        if self.length == 0 || self.channels == 0 || self.window_len < 64 {
            return bad("length and channels must be positive and window_len at least 64".into());
        }
        if self.fault_channel >= self.channels {
            return bad("fault_channel out of range".into());
        }
        if !(self.sampling_hz > 0.0) || !(self.noise_std >= 0.0) || !(self.psi > 0.0) {
            return bad("sampling_hz and psi must be positive, noise_std non-negative".into());
        }
        if !(self.initial_sp >= 1.0) || !(self.growth_rate >= 0.0) {
            return bad("initial_sp must be at least 1 and growth_rate non-negative".into());
        }
        if self.entry_min < 2 || self.entry_min > self.entry_max {
            return bad("entry range must satisfy 2 <= entry_min <= entry_max".into());
        }
        // The dip can only satisfy the entry condition when its minimum is
        // late enough: t_m > (e − t_m) / ψ.
        let f = self.dip_fraction;
        if !(f > 0.0 && f < 1.0) || f <= (1.0 - f) / self.psi {
            return bad("dip_fraction must lie in (1 / (1 + psi), 1)".into());
        }
        if parse_timestamp(&self.start).is_none() || self.interval_s <= 0 {
            return bad("start must be YYYY.MM.DD.HH.MM.SS and interval_s positive".into());
        }
        if self.length > self.fault_onset {
            let sp_max = self.sp_at(self.length - 1).unwrap_or(0.0).round() as usize;
            if self.entry_max + sp_max + 2 > self.window_len {
                return bad(format!(
                    "sp grows to {sp_max} samples, which does not fit after entry {} in a {}-sample window",
                    self.entry_max, self.window_len
                ));
            }
        }
        label_rul(self.length, self.label_t_max)?;
        Ok(())
    }
}

/// Ground truth for one snapshot; fault fields are absent before onset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub experiment: String,
    pub index: usize,
    pub timestamp: String,
    pub entry: Option<usize>,
    pub impact: Option<usize>,
    pub sp: Option<usize>,
    pub rul: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    /// Channel-major windows (`channels × window_len`).
    pub windows: Vec<Vec<f64>>,
    pub truth: Vec<TruthRow>,
}

/// Acceleration dip `a(t) = −A + κ (t − t_m)²`, with `κ` chosen so that
/// `t_m + ψ v(t_m) / a(t_m)` equals the entry time when `v` integrates `a`
/// from zero.
pub fn dip_signature(len: usize, dt: f64, entry: usize, depth: f64, fraction: f64, psi: f64) -> Vec<f64> {
    let e = entry as f64 * dt;
    let t_m = fraction * e;
    let kappa = 3.0 * depth * (t_m - (e - t_m) / psi) / t_m.powi(3);
    (0..len)
        .map(|i| {
            let s = i as f64 * dt - t_m;
            -depth + kappa * s * s
        })
        .collect()
}

pub fn synth_bearing(spec: &SynthSpec, seed: u64) -> Result<SynthOutput, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| DataError::Invalid(e.to_string()))?;
    let labels = label_rul(spec.length, spec.label_t_max)?;
    let start = parse_timestamp(&spec.start).expect("validated");
    let dt = 1.0 / spec.sampling_hz;
    let n = spec.window_len;

    let mut windows = Vec::with_capacity(spec.length);
    let mut truth = Vec::with_capacity(spec.length);
    for (index, &rul) in labels.iter().enumerate() {
        let mut window: Vec<f64> = (0..spec.channels * n).map(|_| noise.sample(&mut rng)).collect();
        let timestamp = timestamp_at(start, spec.interval_s, index);
        let mut row = TruthRow {
            experiment: spec.experiment.clone(),
            index,
            timestamp,
            entry: None,
            impact: None,
            sp: None,
            rul,
        };
        if let Some(sp) = spec.sp_at(index) {
            let sp = sp.round() as usize;
            let entry = rng.random_range(spec.entry_min..=spec.entry_max);
            let impact = entry + sp;
            let channel = &mut window[spec.fault_channel * n..(spec.fault_channel + 1) * n];
            let dip = dip_signature(n, dt, entry, spec.dip_depth, spec.dip_fraction, spec.psi);
            channel.iter_mut().zip(&dip).for_each(|(x, d)| *x += d);
            channel[impact] += spec.impulse_amplitude;
            row.entry = Some(entry);
            row.impact = Some(impact);
            row.sp = Some(sp);
        }
        windows.push(window);
        truth.push(row);
    }
    Ok(SynthOutput { windows, truth })
}

fn timestamp_at(start: NaiveDateTime, interval_s: i64, index: usize) -> String {
    format_timestamp(&(start + Duration::seconds(interval_s * index as i64)))
}
