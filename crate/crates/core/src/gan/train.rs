//! Alternating adversarial training and evaluation.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::head::{discriminator_loss, generator_loss, predict};
use super::{Discriminator, GanConfig, GanError, Generator, Variant};
use crate::data::{Dataset, ZScore};
use crate::metrics::{mae, mse};
use crate::ndcore::{Adam, AdamConfig, Gradients, Tape, Tensor, Var};
use crate::physics::SpallModel;

/// A subset of a dataset together with the scaler fitted on the training
/// portion.
#[derive(Clone, Copy, Debug)]
pub struct TrainingSet<'a> {
    pub dataset: &'a Dataset,
    pub indices: &'a [usize],
    pub scaler: &'a ZScore,
}

/// Scaled inputs of a batch.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[batch, channels, rows]`.
    pub x: Tensor,
    pub sp: Vec<f64>,
    pub y: Vec<f64>,
}

impl TrainingSet<'_> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Assembles and scales the samples at `positions` (indices into
    /// `self.indices`).
    pub fn batch(&self, positions: &[usize]) -> Result<Batch, GanError> {
        let (c, r) = (self.dataset.channels(), self.dataset.rows());
        let mut x = Vec::with_capacity(positions.len() * c * r);
        let (mut sp, mut y) = (Vec::new(), Vec::new());
        for &p in positions {
            let i = self.indices[p];
            let start = x.len();
            x.extend_from_slice(&self.dataset.window(i)?);
            self.scaler.apply(&mut x[start..]);
            let s = self.dataset.sample(i);
            sp.push(s.sp);
            y.push(s.y);
        }
        Ok(Batch {
            x: Tensor::new(vec![positions.len(), c, r], x)?,
            sp,
            y,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    /// Mean generator loss over the epoch's batches.
    pub generator: f64,
    pub discriminator: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub variant: Variant,
    pub seed: u64,
    pub train_samples: usize,
    pub epochs: Vec<EpochLosses>,
    pub test_mae: Option<f64>,
    pub test_mse: Option<f64>,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trained {
    pub variant: Variant,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub report: TrainReport,
}

fn noise(rng: &mut ChaCha8Rng, batch: usize, dim: usize) -> Tensor {
    let values = (0..batch * dim).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(vec![batch, dim], values).expect("positive shape")
}

fn collect(grads: &Gradients, vars: &[Var], params: &[Tensor]) -> Vec<Tensor> {
    vars.iter()
        .zip(params)
        .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
        .collect()
}

fn all_finite(tensors: &[Tensor]) -> bool {
    tensors.iter().all(Tensor::all_finite)
}

/// Trains one variant. Per batch the discriminator takes an Adam step on the
/// real labels and the detached predictions, then the generator takes an
/// Adam step through the full head against the updated discriminator.
pub fn train(
    set: &TrainingSet<'_>,
    variant: Variant,
    config: &GanConfig,
    physics: Option<&SpallModel>,
    seed: u64,
) -> Result<Trained, GanError> {
    config.validate()?;
    if variant.needs_physics() && physics.is_none() {
        return Err(GanError::MissingPhysics { variant });
    }
    if set.is_empty() {
        return Err(GanError::Config("empty training set".into()));
    }
    let channels = set.dataset.channels();
    if config.feature_length(set.dataset.rows()).is_none() {
        return Err(GanError::Config(format!(
            "window of {} samples is too short for {} convolutions of kernel {}",
            set.dataset.rows(),
            config.conv_channels.len(),
            config.conv_kernel
        )));
    }

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut generator = Generator::new(config, variant, channels, &mut rng)?;
    let mut discriminator = Discriminator::new(config, channels, &mut rng)?;
    let mut adam_g = Adam::new(AdamConfig::with_learning_rate(config.lr_generator), &generator.params);
    let mut adam_d = Adam::new(AdamConfig::with_learning_rate(config.lr_discriminator), &discriminator.params);

    let mut report = TrainReport {
        variant,
        seed,
        train_samples: set.len(),
        epochs: Vec::with_capacity(config.epochs),
        test_mae: None,
        test_mse: None,
        wall_clock_s: 0.0,
    };
    let mut order: Vec<usize> = (0..set.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut sum_g, mut sum_d, mut batches) = (0.0, 0.0, 0);
        for (b, positions) in order.chunks(config.batch_size).enumerate() {
            let batch = set.batch(positions)?;
            let n = positions.len();
            let z = noise(&mut rng, n, config.noise_dim);

            let mut tape_g = Tape::new();
            let g_vars = generator.bind(&mut tape_g, true);
            let x_g = tape_g.constant(batch.x.clone());
            let z_g = tape_g.constant(z);
            let head = generator.forward(&mut tape_g, &g_vars, x_g, z_g)?;
            let y_hat = predict(&mut tape_g, head, variant, &config.partition, physics, &batch.sp)?;

            // Discriminator step on real labels and detached predictions.
            let mut tape_d = Tape::new();
            let d_vars = discriminator.bind(&mut tape_d, true);
            let x_d = tape_d.constant(batch.x.clone());
            let y_real = tape_d.constant(Tensor::vector(batch.y.clone()));
            let y_fake = tape_d.constant(tape_g.value(y_hat).clone());
            let features = discriminator.features(&mut tape_d, &d_vars, x_d)?;
            let d_real = discriminator.judge(&mut tape_d, &d_vars, features, y_real)?;
            let d_fake = discriminator.judge(&mut tape_d, &d_vars, features, y_fake)?;
            let loss_d_var = discriminator_loss(&mut tape_d, d_real, d_fake)?;
            let loss_d = tape_d.value(loss_d_var).data()[0];
            let grads_d = tape_d.backward(loss_d_var)?;
            let grads_d = collect(&grads_d, &d_vars, &discriminator.params);
            if !loss_d.is_finite() || !all_finite(&grads_d) {
                return Err(non_finite("discriminator", epoch, b, variant, generator, discriminator, report, started));
            }
            adam_d.step(&mut discriminator.params, &grads_d)?;

            // Generator step against the updated discriminator.
            let d_consts = discriminator.bind(&mut tape_g, false);
            let d_fake = discriminator.forward(&mut tape_g, &d_consts, x_g, y_hat)?;
            let loss_g_var = generator_loss(&mut tape_g, d_fake)?;
            let loss_g = tape_g.value(loss_g_var).data()[0];
            let grads_g = tape_g.backward(loss_g_var)?;
            let grads_g = collect(&grads_g, &g_vars, &generator.params);
            if !loss_g.is_finite() || !all_finite(&grads_g) {
                return Err(non_finite("generator", epoch, b, variant, generator, discriminator, report, started));
            }
            adam_g.step(&mut generator.params, &grads_g)?;

            sum_g += loss_g;
            sum_d += loss_d;
            batches += 1;
        }
        report.epochs.push(EpochLosses {
            epoch,
            generator: sum_g / batches as f64,
            discriminator: sum_d / batches as f64,
        });
    }
    report.wall_clock_s = started.elapsed().as_secs_f64();
    Ok(Trained {
        variant,
        generator,
        discriminator,
        report,
    })
}

#[allow(clippy::too_many_arguments)]
fn non_finite(
    which: &'static str,
    epoch: usize,
    batch: usize,
    variant: Variant,
    generator: Generator,
    discriminator: Discriminator,
    mut report: TrainReport,
    started: Instant,
) -> GanError {
    report.wall_clock_s = started.elapsed().as_secs_f64();
    GanError::NonFinite {
        which,
        epoch,
        batch,
        checkpoint: Box::new(Trained {
            variant,
            generator,
            discriminator,
            report,
        }),
    }
}

/// Predictions for every sample of `set`, in order, with noise drawn from
/// `eval_seed` one sample at a time so the result does not depend on
/// batching.
pub fn predict_dataset(
    generator: &Generator,
    set: &TrainingSet<'_>,
    variant: Variant,
    config: &GanConfig,
    physics: Option<&SpallModel>,
    eval_seed: u64,
) -> Result<Vec<f64>, GanError> {
    if variant.needs_physics() && physics.is_none() {
        return Err(GanError::MissingPhysics { variant });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
    let positions: Vec<usize> = (0..set.len()).collect();
    let mut out = Vec::with_capacity(set.len());
    for chunk in positions.chunks(config.batch_size.max(1)) {
        let batch = set.batch(chunk)?;
        let z = noise(&mut rng, chunk.len(), generator.noise_dim());
        let mut tape = Tape::new();
        let vars = generator.bind(&mut tape, false);
        let x = tape.constant(batch.x);
        let z = tape.constant(z);
        let head = generator.forward(&mut tape, &vars, x, z)?;
        let y_hat = predict(&mut tape, head, variant, &config.partition, physics, &batch.sp)?;
        out.extend_from_slice(tape.value(y_hat).data());
    }
    Ok(out)
}

/// Test MAE and MSE of a trained generator.
pub fn evaluate(
    generator: &Generator,
    set: &TrainingSet<'_>,
    variant: Variant,
    config: &GanConfig,
    physics: Option<&SpallModel>,
) -> Result<(f64, f64), GanError> {
    let predictions = predict_dataset(generator, set, variant, config, physics, config.eval_seed)?;
    let labels: Vec<f64> = set.indices.iter().map(|&i| set.dataset.sample(i).y).collect();
    let to_err = |e: crate::metrics::MetricError| GanError::Config(e.to_string());
    Ok((mae(&labels, &predictions).map_err(to_err)?, mse(&labels, &predictions).map_err(to_err)?))
}
