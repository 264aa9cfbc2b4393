//! Conditional GAN regressors sharing one backbone and training loop; the
//! four variants differ only in how the generator head becomes a prediction.

mod head;
mod nets;
mod params;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::fuzzy::{FuzzyError, FuzzyPartition};
use crate::ndcore::TensorError;
use crate::physics::PhysicsError;

pub use head::{bce, discriminator_loss, fuzzy_head, generator_loss, predict, predict_values};
pub use nets::{Discriminator, Generator};
pub use params::{read_params, write_params, PARAMS_MAGIC, PARAMS_VERSION};
pub use train::{evaluate, predict_dataset, train, Batch, EpochLosses, TrainReport, Trained, TrainingSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "cgan")]
    Cgan,
    #[serde(rename = "fuzzygan")]
    FuzzyGan,
    #[serde(rename = "physicgan")]
    PhysiCgan,
    #[serde(rename = "phyzzygan")]
    PhyzzyGan,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Cgan, Variant::FuzzyGan, Variant::PhysiCgan, Variant::PhyzzyGan];

    pub fn is_fuzzy(self) -> bool {
        matches!(self, Variant::FuzzyGan | Variant::PhyzzyGan)
    }

    pub fn needs_physics(self) -> bool {
        matches!(self, Variant::PhysiCgan | Variant::PhyzzyGan)
    }

    /// Generator head width.
    pub fn head_width(self, partition: &FuzzyPartition) -> usize {
        if self.is_fuzzy() {
            partition.head_width()
        } else {
            1
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Variant::Cgan => 0,
            Variant::FuzzyGan => 1,
            Variant::PhysiCgan => 2,
            Variant::PhyzzyGan => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.tag() == tag)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Cgan => "cgan",
            Variant::FuzzyGan => "fuzzygan",
            Variant::PhysiCgan => "physicgan",
            Variant::PhyzzyGan => "phyzzygan",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown variant {0:?}; expected one of cgan, fuzzygan, physicgan, phyzzygan")]
pub struct UnknownVariant(pub String);

impl FromStr for Variant {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == lower)
            .ok_or_else(|| UnknownVariant(s.to_string()))
    }
}

/// Architecture and optimization settings shared by every variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub noise_dim: usize,
    /// Width of the fully-connected noise projection.
    pub noise_projection: usize,
    /// Output channels of the strided convolution blocks.
    pub conv_channels: Vec<usize>,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    /// Fully-connected trunk widths.
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub partition: FuzzyPartition,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    /// Seed of the noise drawn at evaluation time.
    pub eval_seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            noise_dim: 32,
            noise_projection: 32,
            conv_channels: vec![8, 16, 32, 32],
            conv_kernel: 16,
            conv_stride: 8,
            hidden: vec![128, 64],
            leaky_slope: 0.2,
            partition: FuzzyPartition::default(),
            epochs: 200,
            batch_size: 32,
            lr_generator: 1e-4,
            lr_discriminator: 1e-4,
            eval_seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: &str| Err(GanError::Config(m.to_string()));
        if self.noise_dim == 0 || self.noise_projection == 0 {
            return bad("noise_dim and noise_projection must be positive");
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return bad("conv_channels must be non-empty and positive");
        }
        if self.conv_kernel == 0 || self.conv_stride == 0 {
            return bad("conv_kernel and conv_stride must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return bad("leaky_slope must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr_generator > 0.0) || !(self.lr_discriminator > 0.0) {
            return bad("learning rates must be positive");
        }
        self.partition.validate()?;
        Ok(())
    }

    /// Length left after the convolution stack, or `None` if the window is
    /// too short for it.
    pub fn feature_length(&self, window_len: usize) -> Option<usize> {
        let mut len = window_len;
        for _ in &self.conv_channels {
            if len < self.conv_kernel {
                return None;
            }
            len = (len - self.conv_kernel) / self.conv_stride + 1;
        }
        Some(len)
    }
}

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{variant} needs bearing geometry (pitch_diameter_m, ball_diameter_m, shaft_hz)")]
    MissingPhysics { variant: Variant },
    #[error("non-finite {which} loss at epoch {epoch}, batch {batch}")]
    NonFinite {
        which: &'static str,
        epoch: usize,
        batch: usize,
        /// Parameters after the last finite update.
        checkpoint: Box<Trained>,
    },
    #[error("parameter file: {0}")]
    Params(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[cfg(test)]
mod tests;
