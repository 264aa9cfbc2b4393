//! Variational mode decomposition.
//!
//! ADMM in the frequency domain on the mirror-extended signal: every mode is
//! a Wiener filter of the residual centred on its current frequency, and each
//! centre frequency moves to the power-weighted mean frequency of its mode.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{SignalWindow, SigprocError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VmdConfig {
    pub num_modes: usize,
    /// Bandwidth penalty; larger values give narrower modes.
    pub alpha: f64,
    /// Dual ascent step; zero disables the reconstruction constraint.
    pub tau: f64,
    /// Relative squared change of the modes at which iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for VmdConfig {
    fn default() -> Self {
        Self {
            num_modes: 3,
            alpha: 2000.0,
            tau: 0.0,
            tolerance: 1e-7,
            max_iterations: 500,
        }
    }
}

impl VmdConfig {
    pub fn validate(&self) -> Result<(), SigprocError> {
        if self.num_modes == 0 {
            return Err(SigprocError::Config("num_modes must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(SigprocError::Config("tolerance must be positive"));
        }
        if !(self.alpha > 0.0) || !(self.tau >= 0.0) || self.max_iterations == 0 {
            return Err(SigprocError::Config(
                "alpha must be positive, tau non-negative, max_iterations positive",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VmdOutput {
    /// Modes in ascending centre-frequency order, each as long as the input.
    pub modes: Vec<Vec<f64>>,
    /// Centre frequencies in cycles per sample, ascending.
    pub center_frequencies: Vec<f64>,
    pub iterations: usize,
    /// `false` when `max_iterations` was reached first; the modes are then
    /// the last iterate.
    pub converged: bool,
}

impl VmdOutput {
    pub fn center_frequencies_hz(&self, sampling_hz: f64) -> Vec<f64> {
        self.center_frequencies.iter().map(|f| f * sampling_hz).collect()
    }

    /// Sum of the `count` lowest-frequency modes.
    pub fn reconstruct_lowest(&self, count: usize) -> Vec<f64> {
        let n = self.modes.first().map_or(0, Vec::len);
        let mut out = vec![0.0; n];
        for mode in self.modes.iter().take(count) {
            out.iter_mut().zip(mode).for_each(|(o, m)| *o += m);
        }
        out
    }
}

pub fn vmd(window: &SignalWindow, config: &VmdConfig) -> Result<VmdOutput, SigprocError> {
    decompose(window.samples(), config)
}

/// Decomposes raw samples; see [`vmd`].
pub fn decompose(signal: &[f64], config: &VmdConfig) -> Result<VmdOutput, SigprocError> {
    config.validate()?;
    let n = signal.len();
    if n < 16 {
        return Err(SigprocError::TooShort {
            stage: "vmd",
            len: n,
            min: 16,
        });
    }

    let half = n / 2;
    let mut mirrored = Vec::with_capacity(2 * n);
    mirrored.extend(signal[..half].iter().rev());
    mirrored.extend_from_slice(signal);
    mirrored.extend(signal[half..].iter().rev());
    let t_len = mirrored.len();
    let positive = t_len / 2;

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(t_len);
    let inverse = planner.plan_fft_inverse(t_len);

    let mut spectrum: Vec<Complex64> = mirrored.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward.process(&mut spectrum);
    // One-sided spectrum: DC up to just below Nyquist.
    let f_plus = &spectrum[..positive];
    let freqs: Vec<f64> = (0..positive).map(|j| j as f64 / t_len as f64).collect();

    let k_modes = config.num_modes;
    let zero = Complex64::new(0.0, 0.0);
    let mut modes = vec![vec![zero; positive]; k_modes];
    let mut omega: Vec<f64> = (0..k_modes).map(|k| 0.5 / k_modes as f64 * k as f64).collect();
    let mut lambda = vec![zero; positive];
    let mut total = vec![zero; positive];

    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        let mut change = 0.0;
        let mut energy = 0.0;
        for k in 0..k_modes {
            let mut power = 0.0;
            let mut weighted = 0.0;
            for j in 0..positive {
                let old = modes[k][j];
                let others = total[j] - old;
                let df = freqs[j] - omega[k];
                let new = (f_plus[j] - others - lambda[j] * 0.5) / (1.0 + config.alpha * df * df);
                modes[k][j] = new;
                total[j] = others + new;
                let p = new.norm_sqr();
                power += p;
                weighted += freqs[j] * p;
                change += (new - old).norm_sqr();
                energy += p;
            }
            if power > 0.0 {
                omega[k] = weighted / power;
            }
        }
        if config.tau > 0.0 {
            for j in 0..positive {
                lambda[j] += (total[j] - f_plus[j]) * config.tau;
            }
        }
        if energy == 0.0 || change / energy < config.tolerance {
            converged = true;
            break;
        }
    }

    let mut order: Vec<usize> = (0..k_modes).collect();
    order.sort_by(|&a, &b| omega[a].total_cmp(&omega[b]));

    let scale = 1.0 / t_len as f64;
    let mut out_modes = Vec::with_capacity(k_modes);
    for &k in &order {
        let mut full = vec![zero; t_len];
        full[0] = Complex64::new(modes[k][0].re, 0.0);
        for j in 1..positive {
            full[j] = modes[k][j];
            full[t_len - j] = modes[k][j].conj();
        }
        inverse.process(&mut full);
        out_modes.push(full[half..half + n].iter().map(|c| c.re * scale).collect());
    }

    Ok(VmdOutput {
        modes: out_modes,
        center_frequencies: order.iter().map(|&k| omega[k]).collect(),
        iterations,
        converged,
    })
}

/// Reconstructs `window` from its `keep_modes` lowest-frequency modes.
///
/// Returns the denoised window and whether the decomposition converged.
pub fn denoise(
    window: &SignalWindow,
    config: &VmdConfig,
    keep_modes: usize,
) -> Result<(SignalWindow, bool), SigprocError> {
    let out = vmd(window, config)?;
    let samples = out.reconstruct_lowest(keep_modes);
    Ok((window.with_samples(samples), out.converged))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    const FS: f64 = 20_000.0;

    fn tone(freq: f64, n: usize, amp: f64) -> Vec<f64> {
        (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / FS).sin()).collect()
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn single_tone_center_frequency() {
        let f0 = 1_500.0;
        let cfg = VmdConfig {
            num_modes: 1,
            ..VmdConfig::default()
        };
        let out = decompose(&tone(f0, 2048, 1.0), &cfg).unwrap();
        let hz = out.center_frequencies_hz(FS)[0];
        assert!((hz - f0).abs() / f0 < 0.02, "recovered {hz} Hz");
    }

    #[test]
    fn two_tones_separate() {
        let n = 2048;
        let low = tone(300.0, n, 1.0);
        let high = tone(4_000.0, n, 0.7);
        let mix: Vec<f64> = low.iter().zip(&high).map(|(a, b)| a + b).collect();
        let cfg = VmdConfig {
            num_modes: 2,
            ..VmdConfig::default()
        };
        let out = decompose(&mix, &cfg).unwrap();
        assert!(correlation(&out.modes[0], &low) > 0.95);
        assert!(correlation(&out.modes[1], &high) > 0.95);
    }

    #[test]
    fn zero_signal_gives_zero_modes() {
        let out = decompose(&[0.0; 64], &VmdConfig::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.modes.len(), 3);
        assert!(out.modes.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_short_input() {
        assert!(matches!(
            decompose(&[1.0; 8], &VmdConfig::default()),
            Err(SigprocError::TooShort { .. })
        ));
    }

    #[test]
    fn reports_non_convergence() {
        let cfg = VmdConfig {
            max_iterations: 2,
            ..VmdConfig::default()
        };
        let out = decompose(&tone(700.0, 256, 1.0), &cfg).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }
}
