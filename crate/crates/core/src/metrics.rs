//! Regression error metrics over normalized labels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric over empty vectors")]
    Empty,
    #[error("label and prediction lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

fn check(y: &[f64], y_hat: &[f64]) -> Result<(), MetricError> {
    if y.len() != y_hat.len() {
        return Err(MetricError::LengthMismatch(y.len(), y_hat.len()));
    }
    if y.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricError> {
    check(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Mean squared error.
pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricError> {
    check(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// Test-set metrics of one run. Deliberately free of timing information so
/// identical runs produce identical reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub variant: String,
    pub seed: u64,
    pub mae: f64,
    pub mse: f64,
    pub samples: usize,
    /// SHA-256 of the resolved configuration.
    pub config_digest: String,
}
