//! Fourth-order empirical velocity model and the entry-point estimate.
//!
//! ```text
//! v(t) = ψ (p1 ψ⁴ t⁴ + p2 ψ³ t³ + p3 ψ² t² + p4 ψ t + p5)
//! a(t) = ψ (4 p1 ψ⁴ t³ + 3 p2 ψ³ t² + 2 p3 ψ² t + p4 ψ)
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{SigprocError, SpallFailure};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityModel {
    /// `p1..p5`.
    pub coefficients: [f64; 5],
    /// Dimensionless speed factor, shaft rpm / 1000.
    pub psi: f64,
}

impl VelocityModel {
    pub fn velocity(&self, t: f64) -> f64 {
        let [p1, p2, p3, p4, p5] = self.coefficients;
        let s = self.psi * t;
        self.psi * ((((p1 * s + p2) * s + p3) * s + p4) * s + p5)
    }

    /// Exact derivative of [`VelocityModel::velocity`].
    pub fn acceleration(&self, t: f64) -> f64 {
        let [p1, p2, p3, p4, _] = self.coefficients;
        let s = self.psi * t;
        self.psi * self.psi * (((4.0 * p1 * s + 3.0 * p2) * s + 2.0 * p3) * s + p4)
    }
}

pub fn acceleration_model(model: &VelocityModel, t: f64) -> f64 {
    model.acceleration(t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocityFit {
    pub model: VelocityModel,
    /// Root-mean-square residual over the fitted samples.
    pub residual_rms: f64,
    /// Design matrix was rank deficient; the minimum-norm solution was used.
    pub degenerate: bool,
}

/// Least-squares fit of the velocity model to the first `window_len` samples,
/// with `t = i · dt`.
pub fn fit_velocity_model(
    velocity: &[f64],
    dt: f64,
    psi: f64,
    window_len: usize,
) -> Result<VelocityFit, SigprocError> {
    if window_len == 0 || window_len > velocity.len() {
        return Err(SigprocError::TooShort {
            stage: "velocity fit",
            len: velocity.len(),
            min: window_len.max(1),
        });
    }
    if !(dt > 0.0) || !(psi > 0.0) {
        return Err(SigprocError::Config("dt and psi must be positive"));
    }

    // Basis for p1..p5, evaluated at s = ψ t.
    let basis = |t: f64| {
        let s = psi * t;
        [psi * s.powi(4), psi * s.powi(3), psi * s * s, psi * s, psi]
    };
    let mut design = DMatrix::<f64>::zeros(window_len, 5);
    for i in 0..window_len {
        for (c, v) in basis(i as f64 * dt).into_iter().enumerate() {
            design[(i, c)] = v;
        }
    }
    // Column equilibration keeps the monomials comparable before the SVD.
    let mut scales = [1.0; 5];
    for (c, scale) in scales.iter_mut().enumerate() {
        let norm = design.column(c).norm();
        if norm > 0.0 {
            *scale = norm;
            design.column_mut(c).scale_mut(1.0 / norm);
        }
    }
    let rhs = DVector::from_column_slice(&velocity[..window_len]);
    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let rank_tol = max_sv * 1e-12 * window_len as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > rank_tol).count();
    let solution = svd
        .solve(&rhs, rank_tol)
        .map_err(|_| SigprocError::Config("velocity fit: SVD solve failed"))?;

    let residual = &design * &solution - &rhs;
    let mut coefficients = [0.0; 5];
    for c in 0..5 {
        coefficients[c] = solution[c] / scales[c];
    }
    Ok(VelocityFit {
        model: VelocityModel { coefficients, psi },
        residual_rms: residual.norm() / (window_len as f64).sqrt(),
        degenerate: rank < 5,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntryEstimate {
    /// Time of the acceleration minimum, seconds.
    pub t_min: f64,
    pub a_min: f64,
    /// Model velocity at `t_min`.
    pub k: f64,
    pub entry_time: f64,
    pub entry_index: usize,
}

/// Deepest interior local minimum of the model acceleration on a grid of
/// pitch `dt / 10` over `(0, window_len · dt)`.
pub fn locate_acceleration_minimum(model: &VelocityModel, window_len: usize, dt: f64) -> Option<(f64, f64)> {
    let pitch = dt / 10.0;
    let points = window_len * 10;
    if points < 3 {
        return None;
    }
    let accel: Vec<f64> = (0..=points).map(|i| model.acceleration(i as f64 * pitch)).collect();
    (1..points)
        .filter(|&i| accel[i] < accel[i - 1] && accel[i] <= accel[i + 1])
        .min_by(|&a, &b| accel[a].total_cmp(&accel[b]))
        .map(|i| (i as f64 * pitch, accel[i]))
}

/// Entry time `t_m + k ψ / a_min`, as the nearest sample index.
pub fn find_entry(model: &VelocityModel, window_len: usize, dt: f64) -> Result<EntryEstimate, SpallFailure> {
    let (t_min, a_min) =
        locate_acceleration_minimum(model, window_len, dt).ok_or(SpallFailure::NoLocalMinimum)?;
    if a_min.abs() < 1e-12 {
        return Err(SpallFailure::FlatAcceleration);
    }
    let k = model.velocity(t_min);
    let entry_time = t_min + k * model.psi / a_min;
    let index = (entry_time / dt).round();
    if !index.is_finite() || index < 0.0 || index >= window_len as f64 {
        return Err(SpallFailure::EntryOutsideWindow);
    }
    Ok(EntryEstimate {
        t_min,
        a_min,
        k,
        entry_time,
        entry_index: index as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 5e-5;
    const PSI: f64 = 2.0;

    fn sample(model: &VelocityModel, n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|i| model.velocity(i as f64 * dt)).collect()
    }

    /// Coefficients giving every term unit magnitude at the window end.
    fn balanced(n: usize, weights: [f64; 5]) -> VelocityModel {
        let end = PSI * n as f64 * DT;
        let [w1, w2, w3, w4, w5] = weights;
        VelocityModel {
            coefficients: [w1 / end.powi(4), w2 / end.powi(3), w3 / end.powi(2), w4 / end, w5],
            psi: PSI,
        }
    }

    #[test]
    fn recovers_known_coefficients() {
        let truth = balanced(600, [0.7, -1.3, 0.4, 2.1, -0.6]);
        let fit = fit_velocity_model(&sample(&truth, 600, DT), DT, PSI, 600).unwrap();
        for (got, want) in fit.model.coefficients.iter().zip(truth.coefficients) {
            assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
        }
        assert!(!fit.degenerate);
    }

    #[test]
    fn zero_velocity_gives_zero_coefficients() {
        let fit = fit_velocity_model(&[0.0; 600], DT, PSI, 600).unwrap();
        assert_eq!(fit.model.coefficients, [0.0; 5]);
    }

    #[test]
    fn cubic_data_gives_vanishing_quartic_term() {
        let truth = balanced(600, [0.0, 0.8, -0.5, 0.3, 0.1]);
        let fit = fit_velocity_model(&sample(&truth, 600, DT), DT, PSI, 600).unwrap();
        // p1 multiplies (ψ t)⁴, so compare on the scale of the window end.
        let end = PSI * 600.0 * DT;
        assert!((fit.model.coefficients[0] * end.powi(4)).abs() < 1e-8);
    }

    #[test]
    fn short_window_is_degenerate() {
        let fit = fit_velocity_model(&[1.0, 2.0, 3.0], DT, PSI, 3).unwrap();
        assert!(fit.degenerate);
    }

    #[test]
    fn acceleration_examples() {
        let zero = VelocityModel {
            coefficients: [0.0; 5],
            psi: PSI,
        };
        assert_eq!(acceleration_model(&zero, 0.37), 0.0);
        let linear = VelocityModel {
            coefficients: [0.0, 0.0, 0.0, 1.0, 0.0],
            psi: 2.0,
        };
        for t in [0.0, 0.5, 3.0] {
            assert_eq!(acceleration_model(&linear, t), 4.0);
        }
    }

    #[test]
    fn acceleration_is_derivative_of_velocity() {
        let m = VelocityModel {
            coefficients: [0.3, -1.1, 0.7, 0.2, -0.4],
            psi: 2.0,
        };
        let h = 1e-6;
        for t in [0.05, 0.4, 1.3] {
            let fd = (m.velocity(t + h) - m.velocity(t - h)) / (2.0 * h);
            assert!(((m.acceleration(t) - fd) / fd).abs() < 1e-8);
        }
    }

    /// Model whose acceleration is `(t − 1)² − 1`.
    fn parabola() -> VelocityModel {
        VelocityModel {
            coefficients: [0.0, 1.0 / (3.0 * PSI.powi(4)), -1.0 / PSI.powi(3), 0.0, 0.0],
            psi: PSI,
        }
    }

    #[test]
    fn locates_analytic_minimum() {
        let dt = 0.01;
        let (t_min, a_min) = locate_acceleration_minimum(&parabola(), 300, dt).unwrap();
        assert!((t_min - 1.0).abs() <= dt / 10.0);
        assert!((a_min + 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_velocity_at_minimum_puts_entry_there() {
        // Shift the velocity so v(1) = 0: p5 absorbs −v(1)/ψ.
        let mut m = parabola();
        m.coefficients[4] = -m.velocity(1.0) / PSI;
        let dt = 0.01;
        let est = find_entry(&m, 300, dt).unwrap();
        assert!(est.k.abs() < 1e-6);
        assert!((est.entry_time - est.t_min).abs() < 1e-6);
        assert_eq!(est.entry_index, 100);
    }

    #[test]
    fn monotone_acceleration_has_no_entry() {
        let m = VelocityModel {
            coefficients: [0.0, 0.0, 1.0, 0.0, 0.0],
            psi: PSI,
        };
        assert_eq!(find_entry(&m, 300, 0.01), Err(SpallFailure::NoLocalMinimum));
    }
}
