//! Comparison activations, affine and maxout layers, losses and dropout.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::sigmoid;
use crate::rng::Rng;
use crate::tensor::{self, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    Rectifier,
    Abs,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Identity,
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Rectifier,
        Activation::Abs,
    ];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Rectifier => z.max(0.0),
            Activation::Abs => z.abs(),
        }
    }

    /// Derivative at pre-activation `z`; kinks take the value 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Rectifier => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Abs => {
                if z == 0.0 {
                    0.0
                } else {
                    z.signum()
                }
            }
        }
    }

    pub fn has_kink(self) -> bool {
        matches!(self, Activation::Rectifier | Activation::Abs)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Rectifier => "rectifier",
            Activation::Abs => "abs",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(Activation::Identity),
            "sigmoid" | "logistic" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "rectifier" | "relu" => Ok(Activation::Rectifier),
            "abs" => Ok(Activation::Abs),
            other => Err(Error::Argument(format!("unknown activation kind `{other}`"))),
        }
    }
}

pub fn elementwise_forward(kind: Activation, z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| kind.apply(v)).collect()
}

pub fn elementwise_derivative(kind: Activation, z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| kind.derivative(v)).collect()
}

/// Affine map `x ↦ xW + b` for row-vector batches.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LinearParams {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::shape(
                "LinearParams::new",
                format!("weights {}", weights.shape_str()),
                format!("bias of length {}", bias.len()),
            ));
        }
        Ok(Self { weights, bias })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init(input_dim: usize, output_dim: usize, rng: &mut Rng) -> Result<Self> {
        let limit = (6.0 / (input_dim + output_dim).max(1) as f64).sqrt();
        let w = rng.uniform_vec(-limit, limit, input_dim * output_dim)?;
        Self::new(Matrix::new(input_dim, output_dim, w)?, vec![0.0; output_dim])
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = tensor::matmul(x, &self.weights).map_err(|_| {
            Error::shape("linear_forward", x.shape_str(), format!("weights {}", self.weights.shape_str()))
        })?;
        z.add_row_broadcast(&self.bias)?;
        Ok(z)
    }

    /// Returns `(d_input, d_weights, d_bias)` for upstream `∂L/∂z`.
    pub fn backward(&self, x: &Matrix, d_z: &Matrix) -> Result<(Matrix, Matrix, Vec<f64>)> {
        if x.rows() != d_z.rows() || x.cols() != self.input_dim() || d_z.cols() != self.output_dim() {
            return Err(Error::Usage(format!(
                "linear backward: input {} / upstream {} do not match weights {}",
                x.shape_str(),
                d_z.shape_str(),
                self.weights.shape_str()
            )));
        }
        let d_w = tensor::matmul_tn(x, d_z)?;
        let d_b = d_z.column_sums();
        let d_x = tensor::matmul_nt(d_z, &self.weights)?;
        Ok((d_x, d_w, d_b))
    }
}

/// Max over each group of `group` consecutive entries; the first maximal
/// index wins ties.
pub fn maxout_forward(z: &[f64], group: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    if group == 0 || !z.len().is_multiple_of(group) {
        return Err(Error::shape(
            "maxout_forward",
            format!("{} inputs", z.len()),
            format!("group size {group}"),
        ));
    }
    let units = z.len() / group;
    let mut out = Vec::with_capacity(units);
    let mut argmax = Vec::with_capacity(units);
    for (j, chunk) in z.chunks(group).enumerate() {
        let mut best = 0;
        for (k, &v) in chunk.iter().enumerate().skip(1) {
            if v > chunk[best] {
                best = k;
            }
        }
        out.push(chunk[best]);
        argmax.push(j * group + best);
    }
    Ok((out, argmax))
}

/// Scatters `upstream` onto the winning inputs recorded by [`maxout_forward`].
pub fn maxout_backward(upstream: &[f64], argmax: &[usize], input_len: usize) -> Vec<f64> {
    let mut d = vec![0.0; input_len];
    for (&g, &i) in upstream.iter().zip(argmax) {
        d[i] += g;
    }
    d
}

/// Gap between the largest and second-largest entry over all groups; the
/// distance from a tie where maxout is non-differentiable.
pub fn maxout_margin(z: &[f64], group: usize) -> f64 {
    if group < 2 {
        return f64::INFINITY;
    }
    z.chunks(group)
        .map(|chunk| {
            let mut first = f64::NEG_INFINITY;
            let mut second = f64::NEG_INFINITY;
            for &v in chunk {
                if v > first {
                    second = first;
                    first = v;
                } else if v > second {
                    second = v;
                }
            }
            first - second
        })
        .fold(f64::INFINITY, f64::min)
}

/// Affine map followed by maxout pooling over `group` consecutive outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxoutParams {
    pub linear: LinearParams,
    pub group: usize,
}

impl MaxoutParams {
    pub fn init(input_dim: usize, units: usize, group: usize, rng: &mut Rng) -> Result<Self> {
        if group == 0 {
            return Err(Error::Argument("maxout group size must be >= 1".into()));
        }
        Ok(Self {
            linear: LinearParams::init(input_dim, units * group, rng)?,
            group,
        })
    }

    pub fn units(&self) -> usize {
        self.linear.output_dim() / self.group
    }

    /// Returns the pooled output, the pre-pooling responses and the winners.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Matrix, Vec<usize>)> {
        let z = self.linear.forward(x)?;
        let units = self.units();
        let mut out = Matrix::zeros(x.rows(), units);
        let mut winners = Vec::with_capacity(x.rows() * units);
        for b in 0..x.rows() {
            let (u, arg) = maxout_forward(z.row(b), self.group)?;
            out.row_mut(b).copy_from_slice(&u);
            winners.extend(arg);
        }
        Ok((out, z, winners))
    }

    pub fn backward(
        &self,
        x: &Matrix,
        winners: &[usize],
        upstream: &Matrix,
    ) -> Result<(Matrix, Matrix, Vec<f64>)> {
        let units = self.units();
        if upstream.cols() != units || winners.len() != upstream.rows() * units {
            return Err(Error::Usage(format!(
                "maxout backward: upstream {} with {} recorded winners for {units} units",
                upstream.shape_str(),
                winners.len()
            )));
        }
        let width = self.linear.output_dim();
        let mut d_z = Matrix::zeros(upstream.rows(), width);
        for b in 0..upstream.rows() {
            let d = maxout_backward(upstream.row(b), &winners[b * units..(b + 1) * units], width);
            d_z.row_mut(b).copy_from_slice(&d);
        }
        self.linear.backward(x, &d_z)
    }
}

/// Softmax cross-entropy through a max-shifted log-sum-exp. Returns the loss
/// and `softmax(logits) - onehot(label)`.
pub fn softmax_xent(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Argument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let log_z = max + sum.ln();
    let loss = log_z - logits[label];
    let mut grad: Vec<f64> = logits.iter().map(|&z| (z - log_z).exp()).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Summed independent-Bernoulli negative log-likelihood with logits.
/// Returns the loss and `sigmoid(z) - y`.
pub fn sigmoid_xent(logits: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != targets.len() {
        return Err(Error::shape(
            "sigmoid_xent",
            format!("{} logits", logits.len()),
            format!("{} targets", targets.len()),
        ));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(targets) {
        loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        grad.push(sigmoid(z) - y);
    }
    Ok((loss, grad))
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`, so the mask has expectation 1.
pub fn dropout_mask(rng: &mut Rng, rate: f64, n: usize) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Argument(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if rate == 0.0 {
        return Ok(vec![1.0; n]);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..n)
        .map(|_| if rng.bernoulli(rate) { 0.0 } else { keep })
        .collect())
}
