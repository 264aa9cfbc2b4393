//! Extraction of the spall-passage sample count `sp` from raw vibration.

mod spall;
mod velocity;
mod vmd;

pub use spall::{aggregate_channels, extract_sp, find_impact, squared_second_difference, SpallDetectionConfig, SpallObservation};
pub use velocity::{
    acceleration_model, find_entry, fit_velocity_model, locate_acceleration_minimum, EntryEstimate, VelocityFit,
    VelocityModel,
};
pub use vmd::{decompose, denoise, vmd, VmdConfig, VmdOutput};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SigprocError {
    #[error("{stage}: input of length {len} is shorter than {min}")]
    TooShort {
        stage: &'static str,
        len: usize,
        min: usize,
    },
    #[error("invalid signal window: {0}")]
    Window(&'static str),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}

/// Why a window produced no `sp` value.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SpallFailure {
    #[error("no local minimum")]
    NoLocalMinimum,
    #[error("acceleration minimum is zero")]
    FlatAcceleration,
    #[error("entry outside the analysis window")]
    EntryOutsideWindow,
    #[error("flat signal")]
    FlatSignal,
    #[error("no impulsive peak")]
    NoImpulsivePeak,
    #[error("no sample above threshold after entry")]
    NoImpactAfterEntry,
    #[error("window too short")]
    TooShort,
}

/// One channel of acceleration samples, in g.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalWindow {
    samples: Vec<f64>,
    sampling_hz: f64,
    channel: String,
}

impl SignalWindow {
    pub fn new(samples: Vec<f64>, sampling_hz: f64, channel: impl Into<String>) -> Result<Self, SigprocError> {
        if samples.is_empty() {
            return Err(SigprocError::Window("no samples"));
        }
        if !(sampling_hz > 0.0) {
            return Err(SigprocError::Window("sampling frequency must be positive"));
        }
        Ok(Self {
            samples,
            sampling_hz,
            channel: channel.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sampling_hz(&self) -> f64 {
        self.sampling_hz
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sampling_hz
    }

    pub fn channel(&self) -> &str {
        &self.channel
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            sampling_hz: self.sampling_hz,
            channel: self.channel.clone(),
        }
    }
}

/// Cumulative trapezoid integral starting at zero.
pub fn cumtrapz(signal: &[f64], dt: f64) -> Result<Vec<f64>, SigprocError> {
    if signal.len() < 2 {
        return Err(SigprocError::TooShort {
            stage: "cumtrapz",
            len: signal.len(),
            min: 2,
        });
    }
    let mut out = Vec::with_capacity(signal.len());
    out.push(0.0);
    let mut acc = 0.0;
    for pair in signal.windows(2) {
        acc += dt * (pair[0] + pair[1]) / 2.0;
        out.push(acc);
    }
    Ok(out)
}
