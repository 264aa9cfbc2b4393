//! Entry/impact detection and the `sp` feature.

use serde::{Deserialize, Serialize};

use super::velocity::{find_entry, fit_velocity_model};
use super::vmd::{denoise, VmdConfig};
use super::{cumtrapz, SignalWindow, SpallFailure};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpallDetectionConfig {
    /// Shaft rpm / 1000.
    pub psi: f64,
    /// Leading samples analysed for entry and impact.
    pub analysis_len: usize,
    pub vmd: VmdConfig,
    /// Number of lowest-frequency modes kept by the denoiser.
    pub denoise_modes: usize,
    /// Fraction of the squared second-difference maximum that marks an impact.
    pub impact_fraction: f64,
    /// Minimum ratio of the squared second-difference maximum to its mean;
    /// windows below it carry no impulsive event. Zero disables the check.
    pub min_peak_ratio: f64,
}

impl Default for SpallDetectionConfig {
    fn default() -> Self {
        Self {
            psi: 2.0,
            analysis_len: 600,
            vmd: VmdConfig::default(),
            denoise_modes: 2,
            impact_fraction: 0.05,
            min_peak_ratio: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpallObservation {
    pub entry_index: Option<usize>,
    pub impact_index: Option<usize>,
    /// Samples between entry and impact; zero when invalid.
    pub sp: usize,
    pub valid: bool,
    /// Failing stage and cause for invalid observations.
    pub reason: Option<String>,
    /// The decomposition hit its iteration cap.
    pub vmd_unconverged: bool,
}

impl SpallObservation {
    fn invalid(stage: &str, failure: SpallFailure, entry: Option<usize>, vmd_unconverged: bool) -> Self {
        Self {
            entry_index: entry,
            impact_index: None,
            sp: 0,
            valid: false,
            reason: Some(format!("{stage}: {failure}")),
            vmd_unconverged,
        }
    }
}

/// Squared centred second difference; the ends are zero.
pub fn squared_second_difference(samples: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; samples.len()];
    for i in 1..samples.len().saturating_sub(1) {
        let d = samples[i + 1] - 2.0 * samples[i] + samples[i - 1];
        out[i] = d * d;
    }
    out
}

/// First sample after `entry_index` whose squared second difference reaches
/// `impact_fraction` of its maximum over the first `analysis_len` samples.
pub fn find_impact(
    raw: &[f64],
    entry_index: usize,
    config: &SpallDetectionConfig,
) -> Result<usize, SpallFailure> {
    let n = raw.len().min(config.analysis_len);
    if n < 3 {
        return Err(SpallFailure::TooShort);
    }
    if entry_index >= n {
        return Err(SpallFailure::EntryOutsideWindow);
    }
    let energy = squared_second_difference(&raw[..n]);
    let peak = energy.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(SpallFailure::FlatSignal);
    }
    if config.min_peak_ratio > 0.0 {
        let mean = energy.iter().sum::<f64>() / n as f64;
        if peak < config.min_peak_ratio * mean {
            return Err(SpallFailure::NoImpulsivePeak);
        }
    }
    let threshold = config.impact_fraction * peak;
    energy
        .iter()
        .enumerate()
        .skip(entry_index + 1)
        .find(|&(_, &e)| e >= threshold)
        .map(|(i, _)| i)
        .ok_or(SpallFailure::NoImpactAfterEntry)
}

/// Runs the full chain on one channel window: denoise, integrate, fit the
/// velocity model and locate the entry on the smoothed branch; locate the
/// impact on the raw branch.
pub fn extract_sp(window: &SignalWindow, config: &SpallDetectionConfig) -> SpallObservation {
    let n = window.len().min(config.analysis_len);
    if n < 16 {
        return SpallObservation::invalid("input", SpallFailure::TooShort, None, false);
    }
    let segment = window.with_samples(window.samples()[..n].to_vec());

    let (smooth, converged) = match denoise(&segment, &config.vmd, config.denoise_modes) {
        Ok(out) => out,
        Err(_) => return SpallObservation::invalid("denoise", SpallFailure::TooShort, None, false),
    };
    let unconverged = !converged;
    let velocity = match cumtrapz(smooth.samples(), segment.dt()) {
        Ok(v) => v,
        Err(_) => return SpallObservation::invalid("integrate", SpallFailure::TooShort, None, unconverged),
    };
    let fit = match fit_velocity_model(&velocity, segment.dt(), config.psi, n) {
        Ok(fit) => fit,
        Err(_) => return SpallObservation::invalid("velocity fit", SpallFailure::TooShort, None, unconverged),
    };
    let entry = match find_entry(&fit.model, n, segment.dt()) {
        Ok(e) => e.entry_index,
        Err(failure) => return SpallObservation::invalid("entry", failure, None, unconverged),
    };
    match find_impact(segment.samples(), entry, config) {
        Ok(impact) => SpallObservation {
            entry_index: Some(entry),
            impact_index: Some(impact),
            sp: impact - entry,
            valid: true,
            reason: None,
            vmd_unconverged: unconverged,
        },
        Err(failure) => SpallObservation::invalid("impact", failure, Some(entry), unconverged),
    }
}

/// Per-timestamp `sp`: the largest valid channel value, or zero.
pub fn aggregate_channels(observations: &[SpallObservation]) -> (usize, bool) {
    observations
        .iter()
        .filter(|o| o.valid)
        .map(|o| o.sp)
        .max()
        .map_or((0, false), |sp| (sp, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> SpallDetectionConfig {
        SpallDetectionConfig {
            min_peak_ratio: 0.0,
            ..SpallDetectionConfig::default()
        }
    }

    fn planted(len: usize, spikes: &[(usize, f64)]) -> Vec<f64> {
        let mut x: Vec<f64> = (0..len).map(|i| 0.01 * (i as f64 * 0.37).sin()).collect();
        for &(at, amp) in spikes {
            x[at] += amp;
        }
        x
    }

    #[test]
    fn impulse_found_after_entry() {
        let x = planted(600, &[(300, 5.0)]);
        let impact = find_impact(&x, 250, &config()).unwrap();
        assert!(impact.abs_diff(300) <= 2, "impact at {impact}");
    }

    #[test]
    fn flat_after_entry_is_invalid() {
        let mut x = vec![0.0; 600];
        x[100] = 3.0;
        assert_eq!(find_impact(&x, 250, &config()), Err(SpallFailure::NoImpactAfterEntry));
        assert_eq!(find_impact(&[0.0; 600], 10, &config()), Err(SpallFailure::FlatSignal));
    }

    #[test]
    fn earlier_of_two_impulses_wins() {
        let x = planted(600, &[(320, 4.0), (450, 5.0)]);
        let impact = find_impact(&x, 250, &config()).unwrap();
        assert!(impact.abs_diff(320) <= 2, "impact at {impact}");
    }

    #[test]
    fn threshold_uses_analysis_window_only() {
        // A huge spike past the analysis window must not raise the threshold.
        let mut x = planted(1000, &[(300, 1.0)]);
        x[800] = 100.0;
        let impact = find_impact(&x, 250, &config()).unwrap();
        assert!(impact.abs_diff(300) <= 2);
    }

    #[test]
    fn zero_window_is_invalid() {
        let w = SignalWindow::new(vec![0.0; 1024], 20_000.0, "ch0").unwrap();
        let obs = extract_sp(&w, &SpallDetectionConfig::default());
        assert!(!obs.valid);
        assert!(obs.reason.is_some());
    }

    #[test]
    fn aggregation_takes_largest_valid() {
        let valid = |sp| SpallObservation {
            entry_index: Some(1),
            impact_index: Some(1 + sp),
            sp,
            valid: true,
            reason: None,
            vmd_unconverged: false,
        };
        let bad = SpallObservation::invalid("entry", SpallFailure::NoLocalMinimum, None, false);
        assert_eq!(aggregate_channels(&[valid(40), bad.clone(), valid(90)]), (90, true));
        assert_eq!(aggregate_channels(&[bad]), (0, false));
    }
}
