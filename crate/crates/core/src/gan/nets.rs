//! Generator and discriminator backbones.
//!
//! Both share the same extractor shape: strided 1-D convolutions with leaky
//! rectifiers, then global average pooling over time. Parameters are plain
//! tensors; [`Generator::bind`] / [`Discriminator::bind`] place them on a tape.

use rand::Rng;

use super::{GanConfig, GanError, Variant};
use crate::fuzzy::TRUTH_EPSILON;
use crate::ndcore::{Tape, Tensor, TensorError, Var};

fn uniform(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-bound..bound)).collect())
        .expect("positive shape")
}

fn conv_shapes(config: &GanConfig, in_channels: usize) -> Vec<Vec<usize>> {
    let mut shapes = Vec::new();
    let mut cin = in_channels;
    for &cout in &config.conv_channels {
        shapes.push(vec![cout, cin, config.conv_kernel]);
        shapes.push(vec![cout]);
        cin = cout;
    }
    shapes
}

fn dense_shapes(widths: &[usize]) -> Vec<Vec<usize>> {
    widths
        .windows(2)
        .flat_map(|w| [vec![w[0], w[1]], vec![w[1]]])
        .collect()
}

fn init(shapes: &[Vec<usize>], rng: &mut impl Rng) -> Vec<Tensor> {
    // Weights come in (weight, bias) pairs; both use the weight's fan-in.
    shapes
        .chunks(2)
        .flat_map(|pair| {
            let w = &pair[0];
            let fan_in = if w.len() == 3 { w[1] * w[2] } else { w[0] };
            [uniform(rng, w, fan_in), uniform(rng, &pair[1], fan_in)]
        })
        .collect()
}

fn check_shapes(net: &str, params: &[Tensor], shapes: &[Vec<usize>]) -> Result<(), GanError> {
    if params.len() != shapes.len() {
        return Err(GanError::Params(format!(
            "{net}: expected {} tensors, found {}",
            shapes.len(),
            params.len()
        )));
    }
    for (i, (p, s)) in params.iter().zip(shapes).enumerate() {
        if p.shape() != s.as_slice() {
            return Err(GanError::Params(format!(
                "{net}: tensor {i} has shape {:?}, expected {s:?}",
                p.shape()
            )));
        }
    }
    Ok(())
}

fn bind(tape: &mut Tape, params: &[Tensor], trainable: bool) -> Vec<Var> {
    params
        .iter()
        .map(|p| {
            if trainable {
                tape.param(p.clone())
            } else {
                tape.constant(p.clone())
            }
        })
        .collect()
}

/// Convolution stack and pooling: `[batch, C, len]` → `[batch, C_last]`.
fn extract(tape: &mut Tape, vars: &[Var], x: Var, stride: usize, slope: f64) -> Result<Var, TensorError> {
    let mut h = x;
    for pair in vars.chunks(2) {
        let c = tape.conv1d(h, pair[0], pair[1], stride)?;
        h = tape.leaky_relu(c, slope);
    }
    tape.mean_axis(h, 2)
}

/// Fully-connected layers with leaky rectifiers between them; the last layer
/// is left linear.
fn trunk(tape: &mut Tape, vars: &[Var], x: Var, slope: f64) -> Result<Var, TensorError> {
    let layers = vars.len() / 2;
    let mut h = x;
    for (i, pair) in vars.chunks(2).enumerate() {
        let m = tape.matmul(h, pair[0])?;
        h = tape.add_row(m, pair[1])?;
        if i + 1 < layers {
            h = tape.leaky_relu(h, slope);
        }
    }
    Ok(h)
}

fn squash(tape: &mut Tape, logits: Var) -> Var {
    let s = tape.sigmoid(logits);
    tape.clamp(s, TRUTH_EPSILON, 1.0 - TRUTH_EPSILON)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub params: Vec<Tensor>,
    conv_blocks: usize,
    stride: usize,
    slope: f64,
    noise_dim: usize,
    head_width: usize,
}

impl Generator {
    fn shapes(config: &GanConfig, variant: Variant, in_channels: usize) -> Vec<Vec<usize>> {
        let mut shapes = conv_shapes(config, in_channels);
        shapes.extend(dense_shapes(&[config.noise_dim, config.noise_projection]));
        let mut widths = vec![config.conv_channels.last().copied().unwrap_or(0) + config.noise_projection];
        widths.extend(&config.hidden);
        widths.push(variant.head_width(&config.partition));
        shapes.extend(dense_shapes(&widths));
        shapes
    }

    fn with_params(config: &GanConfig, variant: Variant, params: Vec<Tensor>) -> Self {
        Self {
            params,
            conv_blocks: config.conv_channels.len(),
            stride: config.conv_stride,
            slope: config.leaky_slope,
            noise_dim: config.noise_dim,
            head_width: variant.head_width(&config.partition),
        }
    }

    pub fn new(config: &GanConfig, variant: Variant, in_channels: usize, rng: &mut impl Rng) -> Result<Self, GanError> {
        config.validate()?;
        let params = init(&Self::shapes(config, variant, in_channels), rng);
        Ok(Self::with_params(config, variant, params))
    }

    pub fn from_params(
        config: &GanConfig,
        variant: Variant,
        in_channels: usize,
        params: Vec<Tensor>,
    ) -> Result<Self, GanError> {
        config.validate()?;
        check_shapes("generator", &params, &Self::shapes(config, variant, in_channels))?;
        Ok(Self::with_params(config, variant, params))
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn head_width(&self) -> usize {
        self.head_width
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        bind(tape, &self.params, trainable)
    }

    /// Head in `[ε, 1 − ε]^width` for windows `x: [batch, C, len]` and noise
    /// `z: [batch, noise_dim]`.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var, z: Var) -> Result<Var, TensorError> {
        let conv = 2 * self.conv_blocks;
        let features = extract(tape, &vars[..conv], x, self.stride, self.slope)?;
        let projected = trunk(tape, &vars[conv..conv + 2], z, self.slope)?;
        let projected = tape.leaky_relu(projected, self.slope);
        let joined = tape.concat(&[features, projected], 1)?;
        let logits = trunk(tape, &vars[conv + 2..], joined, self.slope)?;
        Ok(squash(tape, logits))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub params: Vec<Tensor>,
    conv_blocks: usize,
    stride: usize,
    slope: f64,
}

impl Discriminator {
    fn shapes(config: &GanConfig, in_channels: usize) -> Vec<Vec<usize>> {
        let mut shapes = conv_shapes(config, in_channels);
        let mut widths = vec![config.conv_channels.last().copied().unwrap_or(0) + 1];
        widths.extend(&config.hidden);
        widths.push(1);
        shapes.extend(dense_shapes(&widths));
        shapes
    }

    fn with_params(config: &GanConfig, params: Vec<Tensor>) -> Self {
        Self {
            params,
            conv_blocks: config.conv_channels.len(),
            stride: config.conv_stride,
            slope: config.leaky_slope,
        }
    }

    pub fn new(config: &GanConfig, in_channels: usize, rng: &mut impl Rng) -> Result<Self, GanError> {
        config.validate()?;
        Ok(Self::with_params(config, init(&Self::shapes(config, in_channels), rng)))
    }

    pub fn from_params(config: &GanConfig, in_channels: usize, params: Vec<Tensor>) -> Result<Self, GanError> {
        config.validate()?;
        check_shapes("discriminator", &params, &Self::shapes(config, in_channels))?;
        Ok(Self::with_params(config, params))
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        bind(tape, &self.params, trainable)
    }

    /// Pooled window features, computed once and shared by several
    /// [`Discriminator::judge`] calls.
    pub fn features(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var, TensorError> {
        extract(tape, &vars[..2 * self.conv_blocks], x, self.stride, self.slope)
    }

    /// Probability in `[ε, 1 − ε]` that `y: [batch]` is the true label, as a
    /// `[batch]` variable.
    pub fn judge(&self, tape: &mut Tape, vars: &[Var], features: Var, y: Var) -> Result<Var, TensorError> {
        let batch = tape.shape(y)[0];
        let y = tape.reshape(y, vec![batch, 1])?;
        let joined = tape.concat(&[features, y], 1)?;
        let logits = trunk(tape, &vars[2 * self.conv_blocks..], joined, self.slope)?;
        let p = squash(tape, logits);
        tape.reshape(p, vec![batch])
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var, y: Var) -> Result<Var, TensorError> {
        let features = self.features(tape, vars, x)?;
        self.judge(tape, vars, features, y)
    }
}
