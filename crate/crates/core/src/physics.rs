//! Bearing spall-width model and exponential spall-growth life prediction.
//!
//! The spall width follows from the number of samples `sp` between the
//! rolling element entering the spall and striking its trailing edge:
//!
//! ```text
//! l_o = π f_r (D_p² − D_b²) / (D_p f_s) · sp + sqrt(D_b δ + δ²)
//! ```
//!
//! Remaining life is the number of growth steps at rate `r` until the
//! (implication-weighted) failure width is reached, normalized by `t_max`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::TRUTH_EPSILON;
use crate::ndcore::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("invalid bearing geometry: {0}")]
    Geometry(&'static str),
    #[error("invalid growth configuration: {0}")]
    Growth(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BearingGeometry {
    pub pitch_diameter_m: f64,
    pub ball_diameter_m: f64,
    /// Shaft rotation frequency in Hz.
    pub shaft_hz: f64,
    pub sampling_hz: f64,
    pub fault_depth_m: f64,
}

impl BearingGeometry {
    pub fn new(
        pitch_diameter_m: f64,
        ball_diameter_m: f64,
        shaft_hz: f64,
        sampling_hz: f64,
        fault_depth_m: f64,
    ) -> Result<Self, PhysicsError> {
        let g = Self {
            pitch_diameter_m,
            ball_diameter_m,
            shaft_hz,
            sampling_hz,
            fault_depth_m,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !(self.ball_diameter_m > 0.0) {
            return Err(PhysicsError::Geometry("ball diameter must be positive"));
        }
        if !(self.pitch_diameter_m > self.ball_diameter_m) {
            return Err(PhysicsError::Geometry(
                "pitch diameter must exceed ball diameter",
            ));
        }
        if !(self.shaft_hz > 0.0) || !(self.sampling_hz > 0.0) {
            return Err(PhysicsError::Geometry("frequencies must be positive"));
        }
        if !(self.fault_depth_m >= 0.0) {
            return Err(PhysicsError::Geometry("fault depth must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpallGrowthConfig {
    /// Growth rate per timestamp.
    pub growth_rate: f64,
    /// `sp` at which the bearing is considered failed.
    pub sp_at_failure: f64,
    /// Normalization constant in timestamps.
    pub t_max: f64,
    /// Minimum spall width; derived from the geometry when absent.
    pub l_floor_m: Option<f64>,
}

impl Default for SpallGrowthConfig {
    fn default() -> Self {
        Self {
            growth_rate: 0.001,
            sp_at_failure: 600.0,
            t_max: 6324.0,
            l_floor_m: None,
        }
    }
}

impl SpallGrowthConfig {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !(self.growth_rate > 0.0) {
            return Err(PhysicsError::Growth("growth_rate must be positive"));
        }
        if !(self.sp_at_failure > 0.0) {
            return Err(PhysicsError::Growth("sp_at_failure must be positive"));
        }
        if !(self.t_max > 0.0) {
            return Err(PhysicsError::Growth("t_max must be positive"));
        }
        if matches!(self.l_floor_m, Some(f) if !(f > 0.0)) {
            return Err(PhysicsError::Growth("l_floor_m must be positive"));
        }
        Ok(())
    }
}

/// Spall width in meters for `sp` samples between entry and impact.
pub fn spall_width(geom: &BearingGeometry, sp: f64) -> f64 {
    let BearingGeometry {
        pitch_diameter_m: dp,
        ball_diameter_m: db,
        shaft_hz,
        sampling_hz,
        fault_depth_m: delta,
    } = *geom;
    PI * shaft_hz * (dp * dp - db * db) / (dp * sampling_hz) * sp + (db * delta + delta * delta).sqrt()
}

/// Geometry and growth law with the derived widths precomputed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpallModel {
    geometry: BearingGeometry,
    growth: SpallGrowthConfig,
    l_max: f64,
    l_floor: f64,
}

impl SpallModel {
    pub fn new(geometry: BearingGeometry, growth: SpallGrowthConfig) -> Result<Self, PhysicsError> {
        geometry.validate()?;
        growth.validate()?;
        let l_max = spall_width(&geometry, growth.sp_at_failure);
        let l_floor = growth
            .l_floor_m
            .unwrap_or_else(|| spall_width(&geometry, 1.0) / 10.0);
        Ok(Self {
            geometry,
            growth,
            l_max,
            l_floor,
        })
    }

    pub fn geometry(&self) -> &BearingGeometry {
        &self.geometry
    }

    pub fn growth(&self) -> &SpallGrowthConfig {
        &self.growth
    }

    /// Spall width at failure.
    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    pub fn l_floor(&self) -> f64 {
        self.l_floor
    }

    pub fn spall_width(&self, sp: f64) -> f64 {
        spall_width(&self.geometry, sp)
    }

    /// Unnormalized remaining life in timestamps (may be negative).
    pub fn rul_raw(&self, l_o: f64, weight: f64) -> f64 {
        let weight = weight.max(TRUTH_EPSILON);
        (weight * self.l_max / l_o.max(self.l_floor)).ln() / self.growth.growth_rate.ln_1p()
    }

    /// Remaining life normalized by `t_max` and clamped to `[0, 1]`.
    pub fn rul(&self, l_o: f64, weight: f64) -> f64 {
        (self.rul_raw(l_o, weight) / self.growth.t_max).clamp(0.0, 1.0)
    }

    /// Differentiable [`SpallModel::rul`] for a `[batch]` weight variable and
    /// per-sample spall widths.
    pub fn rul_graph(&self, tape: &mut Tape, weight: Var, l_o: &[f64]) -> Result<Var, TensorError> {
        let shape = tape.shape(weight).to_vec();
        let offsets: Vec<f64> = l_o
            .iter()
            .map(|&l| (self.l_max / l.max(self.l_floor)).ln())
            .collect();
        let offsets = tape.constant(Tensor::new(shape, offsets)?);
        let w = tape.clamp(weight, TRUTH_EPSILON, f64::INFINITY);
        let log_w = tape.ln(w)?;
        let log_ratio = tape.add(log_w, offsets)?;
        let scale = 1.0 / (self.growth.growth_rate.ln_1p() * self.growth.t_max);
        let normalized = tape.mul_scalar(log_ratio, scale);
        Ok(tape.clamp(normalized, 0.0, 1.0))
    }
}

/// Normalized remaining life for a single observation.
pub fn rul_exponential(
    l_o: f64,
    weight: f64,
    geometry: &BearingGeometry,
    growth: &SpallGrowthConfig,
) -> Result<f64, PhysicsError> {
    Ok(SpallModel::new(*geometry, *growth)?.rul(l_o, weight))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry(delta: f64) -> BearingGeometry {
        BearingGeometry::new(0.05, 0.01, 25.0, 10_000.0, delta).unwrap()
    }

    #[test]
    fn zero_sp_and_depth_gives_zero_width() {
        assert_eq!(spall_width(&geometry(0.0), 0.0), 0.0);
    }

    #[test]
    fn zero_depth_leaves_linear_term() {
        let g = geometry(0.0);
        let sp = 37.0;
        let expected = PI * 25.0 * (0.05f64.powi(2) - 0.01f64.powi(2)) * sp / (0.05 * 10_000.0);
        assert_eq!(spall_width(&g, sp), expected);
    }

    #[test]
    fn width_increases_with_sp_and_depth() {
        let g = geometry(1e-4);
        assert!(spall_width(&g, 11.0) > spall_width(&g, 10.0));
        assert!(spall_width(&geometry(2e-4), 10.0) > spall_width(&g, 10.0));
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(BearingGeometry::new(0.01, 0.02, 1.0, 1.0, 0.0).is_err());
        assert!(BearingGeometry::new(0.05, 0.01, 0.0, 1.0, 0.0).is_err());
        assert!(BearingGeometry::new(0.05, 0.01, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn rul_zero_when_weighted_failure_width_reached() {
        let model = SpallModel::new(geometry(0.0), SpallGrowthConfig::default()).unwrap();
        let weight = 0.4;
        let l_o = weight * model.l_max();
        assert!(model.rul_raw(l_o, weight).abs() < 1e-9);
        assert_eq!(model.rul(l_o, weight), 0.0);
    }

    #[test]
    fn healthy_width_hits_floor() {
        let model = SpallModel::new(geometry(0.0), SpallGrowthConfig::default()).unwrap();
        let expected = (model.l_max() / model.l_floor()).ln() / 0.001f64.ln_1p();
        assert!((model.rul_raw(0.0, 1.0) - expected).abs() < 1e-9);
        assert!(expected > 6324.0);
        assert_eq!(model.rul(0.0, 1.0), 1.0);
    }

    #[test]
    fn non_positive_weight_uses_floor() {
        let model = SpallModel::new(geometry(0.0), SpallGrowthConfig::default()).unwrap();
        let l_o = model.spall_width(100.0);
        assert_eq!(model.rul_raw(l_o, 0.0), model.rul_raw(l_o, TRUTH_EPSILON));
        assert_eq!(model.rul_raw(l_o, -3.0), model.rul_raw(l_o, TRUTH_EPSILON));
    }

    #[test]
    fn graph_agrees_with_scalar() {
        let model = SpallModel::new(geometry(0.0), SpallGrowthConfig::default()).unwrap();
        let widths = [model.spall_width(300.0), model.spall_width(500.0), 0.0];
        let weights = [0.9, 0.99, 0.5];
        let mut tape = Tape::new();
        let w = tape.constant(Tensor::vector(weights.to_vec()));
        let out = model.rul_graph(&mut tape, w, &widths).unwrap();
        for i in 0..3 {
            let expected = model.rul(widths[i], weights[i]);
            assert!((tape.value(out).data()[i] - expected).abs() < 1e-12);
        }
    }
}
