//! Flat experiment configuration, read from TOML.
//!
//! Every key is optional; absent keys take the documented defaults, and
//! [`ExperimentConfig::to_toml`] writes the fully resolved form back out.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{IngestOptions, SplitSpec, Stratification, IMS_ROWS, IMS_SAMPLING_HZ};
use crate::fuzzy::FuzzyPartition;
use crate::gan::GanConfig;
use crate::physics::{BearingGeometry, PhysicsError, SpallGrowthConfig, SpallModel};
use crate::sigproc::{SpallDetectionConfig, VmdConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {reason}", path.display())]
    Parse { path: std::path::PathBuf, reason: String },
    #[error("bearing geometry is incomplete: set pitch_diameter_m, ball_diameter_m and shaft_hz")]
    MissingGeometry,
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    // Bearing geometry; required by the physics variants only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pitch_diameter_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ball_diameter_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shaft_hz: Option<f64>,
    pub sampling_hz: f64,
    pub fault_depth_m: f64,

    // Spall growth and label normalization.
    pub growth_rate: f64,
    pub sp_at_failure: f64,
    pub t_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_floor_m: Option<f64>,

    // Signal chain.
    pub psi: f64,
    pub analysis_len: usize,
    pub vmd_modes: usize,
    pub vmd_alpha: f64,
    pub vmd_tau: f64,
    pub vmd_tolerance: f64,
    pub vmd_max_iterations: usize,
    pub denoise_modes: usize,
    pub impact_fraction: f64,
    pub min_peak_ratio: f64,

    // Networks and training.
    pub noise_dim: usize,
    pub noise_projection: usize,
    pub conv_channels: Vec<usize>,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub partition_j: usize,
    pub partition_k: usize,
    pub partition_l: usize,
    pub partition_m: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub eval_seed: u64,

    // Data.
    pub rows: usize,
    pub average_pairs: bool,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub stratification: Stratification,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let growth = SpallGrowthConfig::default();
        let sig = SpallDetectionConfig::default();
        let gan = GanConfig::default();
        let split = SplitSpec::default();
        Self {
            pitch_diameter_m: None,
            ball_diameter_m: None,
            shaft_hz: None,
            sampling_hz: IMS_SAMPLING_HZ,
            fault_depth_m: 0.0,
            growth_rate: growth.growth_rate,
            sp_at_failure: growth.sp_at_failure,
            t_max: growth.t_max,
            l_floor_m: growth.l_floor_m,
            psi: sig.psi,
            analysis_len: sig.analysis_len,
            vmd_modes: sig.vmd.num_modes,
            vmd_alpha: sig.vmd.alpha,
            vmd_tau: sig.vmd.tau,
            vmd_tolerance: sig.vmd.tolerance,
            vmd_max_iterations: sig.vmd.max_iterations,
            denoise_modes: sig.denoise_modes,
            impact_fraction: sig.impact_fraction,
            min_peak_ratio: sig.min_peak_ratio,
            noise_dim: gan.noise_dim,
            noise_projection: gan.noise_projection,
            conv_channels: gan.conv_channels,
            conv_kernel: gan.conv_kernel,
            conv_stride: gan.conv_stride,
            hidden: gan.hidden,
            leaky_slope: gan.leaky_slope,
            partition_j: gan.partition.j,
            partition_k: gan.partition.k,
            partition_l: gan.partition.l,
            partition_m: gan.partition.m,
            epochs: gan.epochs,
            batch_size: gan.batch_size,
            lr_generator: gan.lr_generator,
            lr_discriminator: gan.lr_discriminator,
            eval_seed: gan.eval_seed,
            rows: IMS_ROWS,
            average_pairs: true,
            train_fraction: split.train_fraction,
            split_seed: split.seed,
            stratification: split.stratification,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            reason: e.message().to_string(),
        })
    }

    /// Fully resolved TOML; parsing it back yields an identical config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Hex SHA-256 of the resolved TOML.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_toml().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn geometry(&self) -> Result<BearingGeometry, ConfigError> {
        match (self.pitch_diameter_m, self.ball_diameter_m, self.shaft_hz) {
            (Some(dp), Some(db), Some(fr)) => {
                Ok(BearingGeometry::new(dp, db, fr, self.sampling_hz, self.fault_depth_m)?)
            }
            _ => Err(ConfigError::MissingGeometry),
        }
    }

    pub fn growth(&self) -> SpallGrowthConfig {
        SpallGrowthConfig {
            growth_rate: self.growth_rate,
            sp_at_failure: self.sp_at_failure,
            t_max: self.t_max,
            l_floor_m: self.l_floor_m,
        }
    }

    pub fn spall_model(&self) -> Result<SpallModel, ConfigError> {
        Ok(SpallModel::new(self.geometry()?, self.growth())?)
    }

    pub fn detection(&self) -> SpallDetectionConfig {
        SpallDetectionConfig {
            psi: self.psi,
            analysis_len: self.analysis_len,
            vmd: VmdConfig {
                num_modes: self.vmd_modes,
                alpha: self.vmd_alpha,
                tau: self.vmd_tau,
                tolerance: self.vmd_tolerance,
                max_iterations: self.vmd_max_iterations,
            },
            denoise_modes: self.denoise_modes,
            impact_fraction: self.impact_fraction,
            min_peak_ratio: self.min_peak_ratio,
        }
    }

    pub fn gan(&self) -> GanConfig {
        GanConfig {
            noise_dim: self.noise_dim,
            noise_projection: self.noise_projection,
            conv_channels: self.conv_channels.clone(),
            conv_kernel: self.conv_kernel,
            conv_stride: self.conv_stride,
            hidden: self.hidden.clone(),
            leaky_slope: self.leaky_slope,
            partition: FuzzyPartition {
                j: self.partition_j,
                k: self.partition_k,
                l: self.partition_l,
                m: self.partition_m,
            },
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr_generator: self.lr_generator,
            lr_discriminator: self.lr_discriminator,
            eval_seed: self.eval_seed,
        }
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            seed: self.split_seed,
            stratification: self.stratification,
        }
    }

    pub fn ingest(&self) -> IngestOptions {
        IngestOptions {
            rows: self.rows,
            average_pairs: self.average_pairs,
            sampling_hz: self.sampling_hz,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.gan().partition.head_width(), 40);
    }

    #[test]
    fn resolved_form_round_trips() {
        let cfg = ExperimentConfig::from_toml("pitch_diameter_m = 0.0715\nball_diameter_m = 0.0084\nshaft_hz = 33.33\nepochs = 3\n")
            .unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
        assert!(cfg.spall_model().is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("epoch = 3").is_err());
    }

    #[test]
    fn missing_geometry_is_reported() {
        let cfg = ExperimentConfig::default();
        assert!(matches!(cfg.spall_model(), Err(ConfigError::MissingGeometry)));
    }
}
