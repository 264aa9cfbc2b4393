//! Split, scale, train and evaluate: the steps shared by the command line
//! and the test suites.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::data::{concat_split, DataError, Dataset, SplitSpec, ZScore, ZScoreAccumulator};
use crate::gan::{predict_dataset, train, GanError, Trained, TrainingSet, Variant};
use crate::metrics::{mae, mse, MetricReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error("{0}")]
    Mismatch(String),
}

/// A dataset split into train and test indices, with the scaler fitted on
/// the training windows only.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub dataset: Dataset,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub scaler: ZScore,
    /// Normalization constant the labels were built with.
    pub label_t_max: f64,
}

impl Prepared {
    pub fn new(dataset: Dataset, split: &SplitSpec, label_t_max: f64) -> Result<Self, DataError> {
        let (train, test) = concat_split(dataset.experiment_lengths(), split)?;
        if train.is_empty() || test.is_empty() {
            return Err(DataError::Invalid(format!(
                "split of {} samples leaves an empty train or test set",
                dataset.len()
            )));
        }
        let mut acc = ZScoreAccumulator::new(dataset.channels());
        for &i in &train {
            acc.push(&dataset.window(i)?)?;
        }
        let scaler = acc.finish()?;
        Ok(Self {
            dataset,
            train,
            test,
            scaler,
            label_t_max,
        })
    }

    pub fn train_set(&self) -> TrainingSet<'_> {
        TrainingSet {
            dataset: &self.dataset,
            indices: &self.train,
            scaler: &self.scaler,
        }
    }

    pub fn test_set(&self) -> TrainingSet<'_> {
        TrainingSet {
            dataset: &self.dataset,
            indices: &self.test,
            scaler: &self.scaler,
        }
    }

    /// Test labels, in test-set order.
    pub fn test_labels(&self) -> Vec<f64> {
        self.test.iter().map(|&i| self.dataset.sample(i).y).collect()
    }
}

/// Per-sample test prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub experiment: usize,
    pub index: usize,
    pub sp: f64,
    pub y: f64,
    pub y_hat: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trained: Trained,
    pub metrics: MetricReport,
    pub predictions: Vec<PredictionRow>,
}

fn physics_for(variant: Variant, config: &ExperimentConfig, label_t_max: f64) -> Result<Option<crate::physics::SpallModel>, PipelineError> {
    if !variant.needs_physics() {
        return Ok(None);
    }
    if config.t_max != label_t_max {
        return Err(PipelineError::Mismatch(format!(
            "t_max {} differs from the label normalization {label_t_max} of the manifest",
            config.t_max
        )));
    }
    match config.spall_model() {
        Ok(model) => Ok(Some(model)),
        Err(ConfigError::MissingGeometry) => Err(GanError::MissingPhysics { variant }.into()),
        Err(e) => Err(e.into()),
    }
}

/// Test-set predictions and metrics of a generator.
pub fn evaluate_run(
    prepared: &Prepared,
    trained: &Trained,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(MetricReport, Vec<PredictionRow>), PipelineError> {
    let variant = trained.variant;
    let physics = physics_for(variant, config, prepared.label_t_max)?;
    let gan = config.gan();
    let y_hat = predict_dataset(
        &trained.generator,
        &prepared.test_set(),
        variant,
        &gan,
        physics.as_ref(),
        gan.eval_seed,
    )?;
    let labels = prepared.test_labels();
    let to_err = |e: crate::metrics::MetricError| PipelineError::Mismatch(e.to_string());
    let metrics = MetricReport {
        variant: variant.to_string(),
        seed,
        mae: mae(&labels, &y_hat).map_err(to_err)?,
        mse: mse(&labels, &y_hat).map_err(to_err)?,
        samples: labels.len(),
        config_digest: config.digest(),
    };
    let predictions = prepared
        .test
        .iter()
        .zip(&y_hat)
        .map(|(&i, &y_hat)| {
            let s = prepared.dataset.sample(i);
            PredictionRow {
                experiment: s.experiment,
                index: s.index,
                sp: s.sp,
                y: s.y,
                y_hat,
            }
        })
        .collect();
    Ok((metrics, predictions))
}

/// Trains `variant` with `seed` and evaluates it on the test split.
pub fn run(prepared: &Prepared, variant: Variant, config: &ExperimentConfig, seed: u64) -> Result<RunOutcome, PipelineError> {
    let physics = physics_for(variant, config, prepared.label_t_max)?;
    let mut trained = train(&prepared.train_set(), variant, &config.gan(), physics.as_ref(), seed)?;
    let (metrics, predictions) = evaluate_run(prepared, &trained, config, seed)?;
    trained.report.test_mae = Some(metrics.mae);
    trained.report.test_mse = Some(metrics.mse);
    Ok(RunOutcome {
        trained,
        metrics,
        predictions,
    })
}
