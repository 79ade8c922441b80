//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::layers::Activation;
use crate::lp::{Order, OrderInit};
use crate::network::{Layer, LayerSpec, Mode, Network, NetworkSpec};
use crate::rng::{stream, Rng};
use crate::tensor::Matrix;

/// Points closer than this to a non-differentiable point are resampled.
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckResult {
    pub max_rel_error: f64,
    /// Index of the worst parameter, `None` when there are no parameters.
    pub worst: Option<usize>,
    pub analytic: f64,
    pub numeric: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Perturbs each parameter by `±eps` in turn and compares the central
/// difference of `loss` with `analytic`.
pub fn check_gradient(
    params: &[f64],
    analytic: &[f64],
    eps: f64,
    mut loss: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<GradCheckResult> {
    if !(eps > 0.0) {
        return Err(Error::Argument(format!("epsilon must be > 0, got {eps}")));
    }
    if params.len() != analytic.len() {
        return Err(Error::shape(
            "check_gradient",
            format!("{} parameters", params.len()),
            format!("{} gradient entries", analytic.len()),
        ));
    }
    let mut result = GradCheckResult {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut theta = params.to_vec();
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + eps;
        let plus = loss(&theta)?;
        theta[i] = orig - eps;
        let minus = loss(&theta)?;
        theta[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(analytic[i], numeric);
        if result.worst.is_none() || err > result.max_rel_error {
            result = GradCheckResult {
                max_rel_error: err,
                worst: Some(i),
                analytic: analytic[i],
                numeric,
            };
        }
    }
    Ok(result)
}

/// Gradient check of the mean softmax cross-entropy of `net` on a batch, in
/// eval mode (dropout off).
pub fn grad_check(net: &Network, x: &Matrix, labels: &[usize], eps: f64) -> Result<GradCheckResult> {
    let mut probe = net.clone();
    probe.set_mode(Mode::Eval);
    let (_, analytic) = probe.loss_and_gradient(x, labels, None)?;
    let params = probe.flatten();
    check_gradient(&params, &analytic, eps, |theta| {
        probe.unflatten(theta)?;
        probe.loss(x, labels)
    })
}

/// A small random stack: 1–2 hidden layers drawn from dense
/// (sigmoid/tanh/rectifier/abs), maxout and learned-order Lp, then a linear
/// readout. Input and class counts are 2 or 3.
pub fn random_architecture(rng: &mut Rng) -> NetworkSpec {
    let input_dim = 2 + rng.below(2);
    let classes = 2 + rng.below(2);
    let hidden = 1 + rng.below(2);
    let mut layers = Vec::with_capacity(hidden + 1);
    for _ in 0..hidden {
        layers.push(match rng.below(6) {
            0 => LayerSpec::Dense { out: 2 + rng.below(2), activation: Activation::Sigmoid },
            1 => LayerSpec::Dense { out: 2 + rng.below(2), activation: Activation::Tanh },
            2 => LayerSpec::Dense { out: 2 + rng.below(2), activation: Activation::Rectifier },
            3 => LayerSpec::Maxout { units: 2, group: 2 },
            _ => LayerSpec::Lp {
                units: 1 + rng.below(2),
                group: 2 + rng.below(2),
                order: OrderInit::Learned { initial_p: 3.0 },
            },
        });
    }
    layers.push(LayerSpec::Dense { out: classes, activation: Activation::Identity });
    NetworkSpec { input_dim, layers }
}

/// A network + batch ready for checking: `ρ` drawn from `[-2, 3]`, centers
/// from `[-0.5, 0.5]`, and resampled until every kink is at least
/// [`KINK_MARGIN`] away.
#[derive(Debug, Clone)]
pub struct CheckInstance {
    pub net: Network,
    pub x: Matrix,
    pub labels: Vec<usize>,
}

pub fn sample_instance(spec: &NetworkSpec, seed: u64, batch: usize) -> Result<CheckInstance> {
    let mut rng = Rng::substream(seed, stream::GRADCHECK);
    for attempt in 0..1000u64 {
        let mut net = Network::new(spec.clone(), seed.wrapping_add(attempt))?;
        for layer in net.layers_mut() {
            if let Layer::Lp(p) = layer {
                p.centers.iter_mut().for_each(|c| *c = rng.range(-0.5, 0.5));
                if let Order::Learned { rho } = &mut p.order {
                    rho.iter_mut().for_each(|r| *r = rng.range(-2.0, 3.0));
                }
            }
        }
        let x = Matrix::new(
            batch,
            spec.input_dim,
            (0..batch * spec.input_dim).map(|_| rng.normal()).collect(),
        )?;
        let classes = net.output_dim();
        let labels = (0..batch).map(|_| rng.below(classes.max(1))).collect();
        if net.kink_margin(&x)? >= KINK_MARGIN {
            return Ok(CheckInstance { net, x, labels });
        }
    }
    Err(Error::Argument(
        "could not sample a check point away from non-differentiable points".into(),
    ))
}
