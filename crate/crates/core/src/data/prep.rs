//! Labelling, splitting and scaling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DataError;

/// Normalization constant for remaining-life labels: the longest experiment
/// length in snapshots.
pub const DEFAULT_LABEL_T_MAX: f64 = 6324.0;

/// `y_i = (len − 1 − i) / t_max`: every experiment ends at exactly zero.
pub fn label_rul(len: usize, t_max: f64) -> Result<Vec<f64>, DataError> {
    if len == 0 {
        return Err(DataError::Empty("experiment has no snapshots"));
    }
    if !(t_max > 0.0) || (len - 1) as f64 > t_max {
        return Err(DataError::LabelOverflow { len, t_max });
    }
    Ok((0..len).map(|i| (len - 1 - i) as f64 / t_max).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratification {
    /// Shuffle the concatenated samples as one pool.
    #[default]
    None,
    /// Apply the fraction within every experiment separately.
    Experiment,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratification: Stratification,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
            stratification: Stratification::None,
        }
    }
}

/// Train and test indices into the concatenation of experiments with the
/// given lengths. The train size is `floor(fraction · n)` (per experiment when
/// stratified); both lists are sorted.
pub fn concat_split(lengths: &[usize], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DataError::Invalid(format!(
            "train fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let total: usize = lengths.iter().sum();
    if total == 0 {
        return Err(DataError::Empty("nothing to split"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let groups: Vec<Vec<usize>> = match spec.stratification {
        Stratification::None => vec![(0..total).collect()],
        Stratification::Experiment => {
            let mut start = 0;
            lengths
                .iter()
                .map(|&len| {
                    let g = (start..start + len).collect();
                    start += len;
                    g
                })
                .collect()
        }
    };
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut group in groups {
        group.shuffle(&mut rng);
        let cut = (spec.train_fraction * group.len() as f64).floor() as usize;
        train.extend_from_slice(&group[..cut]);
        test.extend_from_slice(&group[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub const STD_FLOOR: f64 = 1e-12;

/// Per-channel z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZScore {
    /// Fits on channel-major windows (`channels × rows` each).
    pub fn fit<'a>(windows: impl IntoIterator<Item = &'a [f64]>, channels: usize) -> Result<Self, DataError> {
        let mut acc = ZScoreAccumulator::new(channels);
        for w in windows {
            acc.push(w)?;
        }
        acc.finish()
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, window: &mut [f64]) {
        let rows = window.len() / self.channels();
        for (c, chunk) in window.chunks_mut(rows).enumerate() {
            let (m, s) = (self.mean[c], self.std[c].max(STD_FLOOR));
            chunk.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
    }

    pub fn unapply(&self, window: &mut [f64]) {
        let rows = window.len() / self.channels();
        for (c, chunk) in window.chunks_mut(rows).enumerate() {
            let (m, s) = (self.mean[c], self.std[c].max(STD_FLOOR));
            chunk.iter_mut().for_each(|v| *v = *v * s + m);
        }
    }
}

/// Streaming (Welford) accumulation of per-channel statistics, so training
/// windows need not all be resident.
#[derive(Clone, Debug)]
pub struct ZScoreAccumulator {
    count: Vec<u64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl ZScoreAccumulator {
    pub fn new(channels: usize) -> Self {
        Self {
            count: vec![0; channels],
            mean: vec![0.0; channels],
            m2: vec![0.0; channels],
        }
    }

    pub fn push(&mut self, window: &[f64]) -> Result<(), DataError> {
        let channels = self.mean.len();
        if channels == 0 || window.is_empty() || !window.len().is_multiple_of(channels) {
            return Err(DataError::Invalid(format!(
                "window of {} values does not split into {channels} channels",
                window.len()
            )));
        }
        let rows = window.len() / channels;
        for (c, chunk) in window.chunks(rows).enumerate() {
            for &v in chunk {
                self.count[c] += 1;
                let delta = v - self.mean[c];
                self.mean[c] += delta / self.count[c] as f64;
                self.m2[c] += delta * (v - self.mean[c]);
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<ZScore, DataError> {
        if self.count.contains(&0) {
            return Err(DataError::Empty("no training windows to fit the scaler"));
        }
        let std = self
            .m2
            .iter()
            .zip(&self.count)
            .map(|(m2, &n)| (m2 / n as f64).sqrt())
            .collect();
        Ok(ZScore { mean: self.mean, std })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_endpoints() {
        let y = label_rul(6324, 6324.0).unwrap();
        assert_eq!(y[0], 6323.0 / 6324.0);
        assert_eq!(*y.last().unwrap(), 0.0);
        assert_eq!(label_rul(1, 6324.0).unwrap(), vec![0.0]);
        let y = label_rul(100, 6324.0).unwrap();
        for w in y.windows(2) {
            assert!((w[0] - w[1] - 1.0 / 6324.0).abs() < 1e-15);
        }
        assert!(matches!(label_rul(6326, 6324.0), Err(DataError::LabelOverflow { .. })));
        assert!(label_rul(6325, 6324.0).is_ok());
        assert!(label_rul(0, 6324.0).is_err());
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let spec = SplitSpec::default();
        let (train, test) = concat_split(&[10], &spec).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        assert!(train.iter().all(|i| !test.contains(i)));

        let half = SplitSpec {
            train_fraction: 0.5,
            ..spec
        };
        let (train, test) = concat_split(&[101], &half).unwrap();
        assert_eq!((train.len(), test.len()), (50, 51));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());

        assert_eq!(concat_split(&[40, 60], &spec).unwrap(), concat_split(&[40, 60], &spec).unwrap());
        assert!(concat_split(&[], &spec).is_err());
        assert!(concat_split(&[0], &spec).is_err());
        assert!(concat_split(&[5], &SplitSpec { train_fraction: 1.0, ..spec }).is_err());
    }

    #[test]
    fn stratified_split_is_per_experiment() {
        let spec = SplitSpec {
            stratification: Stratification::Experiment,
            ..SplitSpec::default()
        };
        let (train, _) = concat_split(&[10, 20], &spec).unwrap();
        assert_eq!(train.iter().filter(|&&i| i < 10).count(), 8);
        assert_eq!(train.iter().filter(|&&i| i >= 10).count(), 16);
    }

    #[test]
    fn constant_channel_scales_to_zero() {
        let w = vec![3.0; 8];
        let z = ZScore::fit([w.as_slice()], 2).unwrap();
        let mut x = w.clone();
        z.apply(&mut x);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaling_round_trips() {
        let w: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin() * 3.0 + i as f64).collect();
        let z = ZScore::fit([w.as_slice()], 2).unwrap();
        let mut x = w.clone();
        z.apply(&mut x);
        z.unapply(&mut x);
        for (a, b) in x.iter().zip(&w) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
