//! Differentiable fuzzy-logic operators.
//!
//! Conjunction is the product t-norm, disjunction its dual probabilistic sum.
//! Vectors of unequal length are combined after cyclically tiling the shorter
//! one to the longer length. Every operator exists twice: on plain
//! [`TruthVector`]s, and on tape variables of shape `[batch, n]` so gradients
//! flow back into the generator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ndcore::{sigmoid, Tape, TensorError, Var};

/// Lower/upper margin applied to network outputs before they enter the
/// fuzzy chain.
pub const TRUTH_EPSILON: f64 = 1e-7;

/// Steepness of the sigmoidal implication.
const STEEPNESS: f64 = 9.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FuzzyError {
    #[error("{op}: operand lengths differ ({lhs} vs {rhs})")]
    LengthMismatch {
        op: &'static str,
        lhs: usize,
        rhs: usize,
    },
    #[error("truth vector must be non-empty and free of NaN")]
    InvalidTruth,
    #[error("partition sizes must be positive, got j={j} k={k} l={l} m={m}")]
    InvalidPartition { j: usize, k: usize, l: usize, m: usize },
}

/// Degrees of truth in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthVector(Vec<f64>);

impl TruthVector {
    /// Clamps into `[0, 1]`.
    pub fn new(values: Vec<f64>) -> Result<Self, FuzzyError> {
        Self::clamped(values, 0.0, 1.0)
    }

    /// Clamps into `[ε, 1 − ε]`; used for saturating network outputs.
    pub fn saturating(values: Vec<f64>) -> Result<Self, FuzzyError> {
        Self::clamped(values, TRUTH_EPSILON, 1.0 - TRUTH_EPSILON)
    }

    fn clamped(values: Vec<f64>, lo: f64, hi: f64) -> Result<Self, FuzzyError> {
        if values.is_empty() || values.iter().any(|v| v.is_nan()) {
            return Err(FuzzyError::InvalidTruth);
        }
        Ok(Self(values.into_iter().map(|v| v.clamp(lo, hi)).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn tiled_pairs<'a>(a: &'a TruthVector, b: &'a TruthVector) -> impl Iterator<Item = (f64, f64)> + 'a {
    let n = a.len().max(b.len());
    (0..n).map(move |i| (a.0[i % a.len()], b.0[i % b.len()]))
}

/// Product t-norm.
pub fn t_norm(a: &TruthVector, b: &TruthVector) -> TruthVector {
    TruthVector(tiled_pairs(a, b).map(|(x, y)| x * y).collect())
}

/// Probabilistic-sum t-conorm.
pub fn t_conorm(c: &TruthVector, d: &TruthVector) -> TruthVector {
    TruthVector(tiled_pairs(c, d).map(|(x, y)| x + y - x * y).collect())
}

fn zip_equal(
    op: &'static str,
    t: &TruthVector,
    s: &TruthVector,
    f: impl Fn(f64, f64) -> f64,
) -> Result<TruthVector, FuzzyError> {
    if t.len() != s.len() {
        return Err(FuzzyError::LengthMismatch {
            op,
            lhs: t.len(),
            rhs: s.len(),
        });
    }
    Ok(TruthVector(
        t.0.iter().zip(&s.0).map(|(&a, &c)| f(a, c)).collect(),
    ))
}

pub fn reichenbach_scalar(t: f64, s: f64) -> f64 {
    1.0 - t + t * s
}

/// Reichenbach implication `1 − T + T·S`.
pub fn reichenbach(t: &TruthVector, s: &TruthVector) -> Result<TruthVector, FuzzyError> {
    zip_equal("reichenbach", t, s, reichenbach_scalar)
}

/// Sigmoidal reshaping of an implication value; fixes 0, ½ and 1.
pub fn sigmoidal_map(i_rc: f64) -> f64 {
    let e = (STEEPNESS / 2.0).exp();
    ((1.0 + e) * sigmoid(STEEPNESS * (i_rc - 0.5)) - 1.0) / (e - 1.0)
}

/// Sigmoidal implication built on the Reichenbach implication.
pub fn sigmoidal_implication(t: &TruthVector, s: &TruthVector) -> Result<TruthVector, FuzzyError> {
    zip_equal("sigmoidal_implication", t, s, |a, c| {
        sigmoidal_map(reichenbach_scalar(a, c)).clamp(0.0, 1.0)
    })
}

/// Product aggregator over all implications.
pub fn product_aggregate(implications: &TruthVector) -> f64 {
    implications.0.iter().product()
}

/// Sizes of the antecedent (`a`, `b`) and consequent (`c`, `d`) blocks the
/// generator head is split into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzyPartition {
    pub j: usize,
    pub k: usize,
    pub l: usize,
    pub m: usize,
}

impl Default for FuzzyPartition {
    fn default() -> Self {
        Self {
            j: 8,
            k: 8,
            l: 8,
            m: 16,
        }
    }
}

impl FuzzyPartition {
    pub fn new(j: usize, k: usize, l: usize, m: usize) -> Result<Self, FuzzyError> {
        let p = Self { j, k, l, m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FuzzyError> {
        if [self.j, self.k, self.l, self.m].contains(&0) {
            return Err(FuzzyError::InvalidPartition {
                j: self.j,
                k: self.k,
                l: self.l,
                m: self.m,
            });
        }
        Ok(())
    }

    /// Generator head width `N = j + k + l + m`.
    pub fn head_width(&self) -> usize {
        self.j + self.k + self.l + self.m
    }

    /// Number of implications `M = max(j, k, l, m)`.
    pub fn implication_width(&self) -> usize {
        self.j.max(self.k).max(self.l).max(self.m)
    }
}

/// Tape versions of the operators on `[batch, n]` variables.
pub mod graph {
    use super::*;

    fn tile_to(tape: &mut Tape, x: Var, width: usize) -> Result<Var, TensorError> {
        if tape.shape(x)[1] == width {
            Ok(x)
        } else {
            tape.tile(x, 1, width)
        }
    }

    pub fn t_norm(tape: &mut Tape, a: Var, b: Var) -> Result<Var, TensorError> {
        let width = tape.shape(a)[1].max(tape.shape(b)[1]);
        let (a, b) = (tile_to(tape, a, width)?, tile_to(tape, b, width)?);
        tape.mul(a, b)
    }

    pub fn t_conorm(tape: &mut Tape, c: Var, d: Var) -> Result<Var, TensorError> {
        let width = tape.shape(c)[1].max(tape.shape(d)[1]);
        let (c, d) = (tile_to(tape, c, width)?, tile_to(tape, d, width)?);
        let sum = tape.add(c, d)?;
        let prod = tape.mul(c, d)?;
        tape.sub(sum, prod)
    }

    pub fn reichenbach(tape: &mut Tape, t: Var, s: Var) -> Result<Var, TensorError> {
        let ts = tape.mul(t, s)?;
        let diff = tape.sub(ts, t)?;
        Ok(tape.add_scalar(diff, 1.0))
    }

    pub fn sigmoidal_map(tape: &mut Tape, i_rc: Var) -> Var {
        let e = (STEEPNESS / 2.0).exp();
        let shifted = tape.add_scalar(i_rc, -0.5);
        let scaled = tape.mul_scalar(shifted, STEEPNESS);
        let sig = tape.sigmoid(scaled);
        let stretched = tape.mul_scalar(sig, (1.0 + e) / (e - 1.0));
        tape.add_scalar(stretched, -1.0 / (e - 1.0))
    }

    pub fn sigmoidal_implication(tape: &mut Tape, t: Var, s: Var) -> Result<Var, TensorError> {
        let i_rc = reichenbach(tape, t, s)?;
        Ok(sigmoidal_map(tape, i_rc))
    }

    /// Product over the implication axis: `[batch, M]` → `[batch]`.
    pub fn product_aggregate(tape: &mut Tape, implications: Var) -> Result<Var, TensorError> {
        tape.prod_axis(implications, 1)
    }
}
