//! Prediction heads and adversarial losses.

use super::{GanError, Variant};
use crate::fuzzy::{self, graph, FuzzyPartition, TruthVector, TRUTH_EPSILON};
use crate::ndcore::{Tape, TensorError, Var};
use crate::physics::SpallModel;

/// Splits a `[batch, N]` head into `a, b, c, d` and returns the `[batch, M]`
/// sigmoidal implications of `T = a ∧ b` and `S = c ∨ d`.
pub fn fuzzy_head(tape: &mut Tape, head: Var, partition: &FuzzyPartition) -> Result<Var, TensorError> {
    let FuzzyPartition { j, k, l, m } = *partition;
    let a = tape.slice(head, 1, 0, j)?;
    let b = tape.slice(head, 1, j, k)?;
    let c = tape.slice(head, 1, j + k, l)?;
    let d = tape.slice(head, 1, j + k + l, m)?;
    let width = partition.implication_width();
    let mut t = graph::t_norm(tape, a, b)?;
    let mut s = graph::t_conorm(tape, c, d)?;
    if tape.shape(t)[1] != width {
        t = tape.tile(t, 1, width)?;
    }
    if tape.shape(s)[1] != width {
        s = tape.tile(s, 1, width)?;
    }
    graph::sigmoidal_implication(tape, t, s)
}

/// Maps a `[batch, width]` head to `[batch]` predictions in `[0, 1]`.
///
/// `sp` holds the per-sample spall-passage counts; it is only read by the
/// physics variants, which also need `physics`.
pub fn predict(
    tape: &mut Tape,
    head: Var,
    variant: Variant,
    partition: &FuzzyPartition,
    physics: Option<&SpallModel>,
    sp: &[f64],
) -> Result<Var, GanError> {
    let batch = tape.shape(head)[0];
    let weight = if variant.is_fuzzy() {
        let implications = fuzzy_head(tape, head, partition)?;
        graph::product_aggregate(tape, implications)?
    } else {
        tape.reshape(head, vec![batch])?
    };
    if !variant.needs_physics() {
        return Ok(weight);
    }
    let model = physics.ok_or(GanError::MissingPhysics { variant })?;
    if sp.len() != batch {
        return Err(GanError::Config(format!("{} sp values for a batch of {batch}", sp.len())));
    }
    let widths: Vec<f64> = sp.iter().map(|&s| model.spall_width(s)).collect();
    Ok(model.rul_graph(tape, weight, &widths)?)
}

/// Single-sample prediction computed without the tape.
pub fn predict_values(
    head: &[f64],
    variant: Variant,
    partition: &FuzzyPartition,
    physics: Option<&SpallModel>,
    sp: f64,
) -> Result<f64, GanError> {
    let weight = if variant.is_fuzzy() {
        let FuzzyPartition { j, k, l, m } = *partition;
        if head.len() != j + k + l + m {
            return Err(GanError::Config(format!("head of width {} for partition {partition:?}", head.len())));
        }
        let tv = |r: std::ops::Range<usize>| TruthVector::new(head[r].to_vec());
        let t = fuzzy::t_norm(&tv(0..j)?, &tv(j..j + k)?);
        let s = fuzzy::t_conorm(&tv(j + k..j + k + l)?, &tv(j + k + l..j + k + l + m)?);
        let width = partition.implication_width();
        let tile = |v: &TruthVector| TruthVector::new((0..width).map(|i| v.values()[i % v.len()]).collect());
        fuzzy::product_aggregate(&fuzzy::sigmoidal_implication(&tile(&t)?, &tile(&s)?)?)
    } else {
        head[0]
    };
    if !variant.needs_physics() {
        return Ok(weight);
    }
    let model = physics.ok_or(GanError::MissingPhysics { variant })?;
    Ok(model.rul(model.spall_width(sp), weight))
}

/// Binary cross-entropy of probability `p` against `target`, with `p`
/// clamped away from 0 and 1.
pub fn bce(p: f64, target: f64) -> f64 {
    let p = p.clamp(TRUTH_EPSILON, 1.0 - TRUTH_EPSILON);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// `mean(−ln D(real)) + mean(−ln(1 − D(fake)))` over `[batch]` outputs.
pub fn discriminator_loss(tape: &mut Tape, d_real: Var, d_fake: Var) -> Result<Var, TensorError> {
    let log_real = tape.ln(d_real)?;
    let real = tape.mean(log_real);
    let one_minus = tape.rsub_scalar(1.0, d_fake);
    let log_fake = tape.ln(one_minus)?;
    let fake = tape.mean(log_fake);
    let sum = tape.add(real, fake)?;
    Ok(tape.mul_scalar(sum, -1.0))
}

/// Non-saturating generator loss `mean(−ln D(fake))`.
pub fn generator_loss(tape: &mut Tape, d_fake: Var) -> Result<Var, TensorError> {
    let log_fake = tape.ln(d_fake)?;
    let mean = tape.mean(log_fake);
    Ok(tape.mul_scalar(mean, -1.0))
}
