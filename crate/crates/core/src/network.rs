//! Sequential feed-forward stacks of dense, Lp, maxout and dropout layers.
//!
//! The last layer's outputs are the class logits; a conventional classifier
//! ends with `LayerSpec::Dense { activation: Identity, .. }`. All parameters
//! can be flattened into one vector (layer order; within a layer: weights
//! row-major, then bias or centers, then learned `ρ`).

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{self, Activation, LinearParams, MaxoutParams};
use crate::lp::{LpCache, LpLayerParams, Order, OrderInit};
use crate::rng::{stream, Rng};
use crate::tensor::Matrix;

pub const NETWORK_SCHEMA: &str = "lpunit.network/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense { out: usize, activation: Activation },
    Lp { units: usize, group: usize, order: OrderInit },
    Maxout { units: usize, group: usize },
    Dropout { rate: f64 },
}

impl LayerSpec {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match *self {
            LayerSpec::Dense { out, .. } => out,
            LayerSpec::Lp { units, .. } | LayerSpec::Maxout { units, .. } => units,
            LayerSpec::Dropout { .. } => input_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .fold(self.input_dim, |dim, l| l.output_dim(dim))
    }

    pub fn validate(&self) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |msg: String| Err(Error::Argument(format!("layer {i}: {msg}")));
            match *layer {
                LayerSpec::Dense { out: 0, .. } => return bad("dense layer needs out >= 1".into()),
                LayerSpec::Lp { units, group, order } => {
                    if units == 0 || group == 0 {
                        return bad("Lp layer needs units >= 1 and group >= 1".into());
                    }
                    match order {
                        OrderInit::Learned { initial_p } if !(initial_p > 1.0) => {
                            return bad(format!("initial order must be > 1, got {initial_p}"))
                        }
                        OrderInit::Fixed { p } if !(p >= 1.0) => {
                            return bad(format!("fixed order must be >= 1, got {p}"))
                        }
                        _ => {}
                    }
                }
                LayerSpec::Maxout { units, group } if units == 0 || group == 0 => {
                    return bad("maxout layer needs units >= 1 and group >= 1".into())
                }
                LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                    return bad(format!("dropout rate must be in [0, 1), got {rate}"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// One hidden layer of `units` learned-order Lp units followed by a
    /// linear readout to `classes` logits.
    pub fn lp_classifier(input_dim: usize, units: usize, group: usize, order: OrderInit, classes: usize) -> Self {
        Self {
            input_dim,
            layers: vec![
                LayerSpec::Lp { units, group, order },
                LayerSpec::Dense {
                    out: classes,
                    activation: Activation::Identity,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense {
        params: LinearParams,
        activation: Activation,
    },
    Lp(LpLayerParams),
    Maxout(MaxoutParams),
    Dropout {
        rate: f64,
    },
}

impl Layer {
    fn param_count(&self) -> usize {
        match self {
            Layer::Dense { params, .. } => params.weights.as_slice().len() + params.bias.len(),
            Layer::Lp(p) => p.param_count(),
            Layer::Maxout(m) => m.linear.weights.as_slice().len() + m.linear.bias.len(),
            Layer::Dropout { .. } => 0,
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Lp(_) => "lp",
            Layer::Maxout(_) => "maxout",
            Layer::Dropout { .. } => "dropout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Built-in fault injection for exercising the gradient checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Doubles every Lp `∂L/∂ρ` after the backward pass.
    DoubleOrderGradient,
}

#[derive(Debug, Clone)]
enum LayerCache {
    Dense { input: Matrix, pre: Matrix },
    Lp(LpCache),
    Maxout { input: Matrix, winners: Vec<usize> },
    Dropout { mask: Option<Matrix> },
}

/// Per-layer values saved by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    batch: usize,
}

#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    mode: Mode,
    seed: u64,
    fault: Option<Fault>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDocument {
    schema: String,
    seed: u64,
    spec: NetworkSpec,
    params: Vec<f64>,
}

impl Network {
    /// Materializes `spec` with parameters drawn from the `INIT` substream of `seed`.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::substream(seed, stream::INIT);
        let mut dim = spec.input_dim;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for l in &spec.layers {
            layers.push(match *l {
                LayerSpec::Dense { out, activation } => Layer::Dense {
                    params: LinearParams::init(dim, out, &mut rng)?,
                    activation,
                },
                LayerSpec::Lp { units, group, order } => {
                    Layer::Lp(LpLayerParams::init(dim, units, group, order, &mut rng)?)
                }
                LayerSpec::Maxout { units, group } => {
                    Layer::Maxout(MaxoutParams::init(dim, units, group, &mut rng)?)
                }
                LayerSpec::Dropout { rate } => Layer::Dropout { rate },
            });
            dim = l.output_dim(dim);
        }
        Ok(Self {
            spec,
            layers,
            mode: Mode::Eval,
            seed,
            fault: None,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn set_fault(&mut self, fault: Option<Fault>) {
        self.fault = fault;
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Name and flat-vector range of every parameter block.
    pub fn param_blocks(&self) -> Vec<(String, Range<usize>)> {
        let mut out = Vec::new();
        let mut at = 0;
        let mut push = |name: String, len: usize, out: &mut Vec<(String, Range<usize>)>| {
            out.push((name, at..at + len));
            at += len;
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let kind = layer.kind_name();
            match layer {
                Layer::Dense { params, .. } | Layer::Maxout(MaxoutParams { linear: params, .. }) => {
                    push(format!("layer{i}.{kind}.weights"), params.weights.as_slice().len(), &mut out);
                    push(format!("layer{i}.{kind}.bias"), params.bias.len(), &mut out);
                }
                Layer::Lp(p) => {
                    push(format!("layer{i}.lp.weights"), p.weights.as_slice().len(), &mut out);
                    push(format!("layer{i}.lp.centers"), p.centers.len(), &mut out);
                    if let Order::Learned { rho } = &p.order {
                        push(format!("layer{i}.lp.rho"), rho.len(), &mut out);
                    }
                }
                Layer::Dropout { .. } => {}
            }
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            match layer {
                Layer::Dense { params, .. } | Layer::Maxout(MaxoutParams { linear: params, .. }) => {
                    v.extend_from_slice(params.weights.as_slice());
                    v.extend_from_slice(&params.bias);
                }
                Layer::Lp(p) => {
                    v.extend_from_slice(p.weights.as_slice());
                    v.extend_from_slice(&p.centers);
                    if let Order::Learned { rho } = &p.order {
                        v.extend_from_slice(rho);
                    }
                }
                Layer::Dropout { .. } => {}
            }
        }
        v
    }

    pub fn unflatten(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.param_count() {
            return Err(Error::shape(
                "unflatten",
                format!("{} parameters", self.param_count()),
                format!("vector of length {}", v.len()),
            ));
        }
        let mut at = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&v[at..at + dst.len()]);
            at += dst.len();
        };
        for layer in &mut self.layers {
            match layer {
                Layer::Dense { params, .. } | Layer::Maxout(MaxoutParams { linear: params, .. }) => {
                    take(params.weights.as_mut_slice());
                    take(&mut params.bias);
                }
                Layer::Lp(p) => {
                    take(p.weights.as_mut_slice());
                    take(&mut p.centers);
                    if let Order::Learned { rho } = &mut p.order {
                        take(rho);
                    }
                }
                Layer::Dropout { .. } => {}
            }
        }
        Ok(())
    }

    /// Orders of every Lp unit in the network, in layer order.
    pub fn lp_orders(&self) -> Vec<f64> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Lp(p) => Some(p.orders()),
                _ => None,
            })
            .flatten()
            .collect()
    }

    /// Forward pass over a `batch × input_dim` matrix. Dropout is applied only
    /// in train mode, drawing masks from `rng`.
    pub fn forward(&self, x: &Matrix, mut rng: Option<&mut Rng>) -> Result<(Matrix, ForwardCache)> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::shape(
                "mlp_forward",
                x.shape_str(),
                format!("network input dimension {}", self.spec.input_dim),
            ));
        }
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = match layer {
                Layer::Dense { params, activation } => {
                    let pre = params.forward(&h)?;
                    let out = pre.map(|z| activation.apply(z));
                    (out, LayerCache::Dense { input: h, pre })
                }
                Layer::Lp(p) => {
                    let (out, cache) = p.forward(&h)?;
                    (out, LayerCache::Lp(cache))
                }
                Layer::Maxout(m) => {
                    let (out, _, winners) = m.forward(&h)?;
                    (out, LayerCache::Maxout { input: h, winners })
                }
                Layer::Dropout { rate } => {
                    if self.mode == Mode::Train && *rate > 0.0 {
                        let rng = rng.as_deref_mut().ok_or_else(|| {
                            Error::Usage("train-mode forward with dropout needs an rng".into())
                        })?;
                        let mask = Matrix::new(
                            h.rows(),
                            h.cols(),
                            layers::dropout_mask(rng, *rate, h.rows() * h.cols())?,
                        )?;
                        let mut out = h;
                        out.as_mut_slice()
                            .iter_mut()
                            .zip(mask.as_slice())
                            .for_each(|(v, m)| *v *= m);
                        (out, LayerCache::Dropout { mask: Some(mask) })
                    } else {
                        (h, LayerCache::Dropout { mask: None })
                    }
                }
            };
            h = next;
            caches.push(cache);
        }
        Ok((
            h,
            ForwardCache {
                layers: caches,
                batch: x.rows(),
            },
        ))
    }

    /// Logits in eval semantics regardless of the current mode.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if self.mode == Mode::Eval {
            return Ok(self.forward(x, None)?.0);
        }
        let mut eval = self.clone();
        eval.mode = Mode::Eval;
        Ok(eval.forward(x, None)?.0)
    }

    pub fn predict_labels(&self, x: &Matrix) -> Result<Vec<usize>> {
        let logits = self.predict(x)?;
        Ok(logits.iter_rows().map(argmax).collect())
    }

    /// Outputs of layer `index` (eval semantics), e.g. per-unit activations.
    pub fn layer_output(&self, x: &Matrix, index: usize) -> Result<Matrix> {
        if index >= self.layers.len() {
            return Err(Error::Argument(format!(
                "layer index {index} out of range for {} layers",
                self.layers.len()
            )));
        }
        let mut truncated = self.clone();
        truncated.mode = Mode::Eval;
        truncated.layers.truncate(index + 1);
        truncated.spec.layers.truncate(index + 1);
        Ok(truncated.forward(x, None)?.0)
    }

    /// Reverse pass for upstream `∂L/∂logits`; returns the flattened gradient
    /// summed over the batch rows of `d_logits`.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &Matrix) -> Result<Vec<f64>> {
        if cache.layers.len() != self.layers.len()
            || d_logits.rows() != cache.batch
            || d_logits.cols() != self.output_dim()
        {
            return Err(Error::Usage(format!(
                "backward: cache for {} layers / batch {} does not match network of {} layers and upstream {}",
                cache.layers.len(),
                cache.batch,
                self.layers.len(),
                d_logits.shape_str()
            )));
        }
        let mut blocks: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut upstream = d_logits.clone();
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let mut grads = Vec::with_capacity(layer.param_count());
            upstream = match (layer, lc) {
                (Layer::Dense { params, activation }, LayerCache::Dense { input, pre }) => {
                    let mut d_pre = upstream;
                    d_pre
                        .as_mut_slice()
                        .iter_mut()
                        .zip(pre.as_slice())
                        .for_each(|(g, &z)| *g *= activation.derivative(z));
                    let (d_x, d_w, d_b) = params.backward(input, &d_pre)?;
                    grads.extend(d_w.into_vec());
                    grads.extend(d_b);
                    d_x
                }
                (Layer::Lp(p), LayerCache::Lp(c)) => {
                    let (d_x, mut g) = p.backward(&upstream, c)?;
                    if self.fault == Some(Fault::DoubleOrderGradient) {
                        g.d_rho.iter_mut().for_each(|v| *v *= 2.0);
                    }
                    grads.extend(g.d_weights.into_vec());
                    grads.extend(g.d_centers);
                    grads.extend(g.d_rho);
                    d_x
                }
                (Layer::Maxout(m), LayerCache::Maxout { input, winners }) => {
                    let (d_x, d_w, d_b) = m.backward(input, winners, &upstream)?;
                    grads.extend(d_w.into_vec());
                    grads.extend(d_b);
                    d_x
                }
                (Layer::Dropout { .. }, LayerCache::Dropout { mask }) => {
                    let mut d = upstream;
                    if let Some(mask) = mask {
                        d.as_mut_slice()
                            .iter_mut()
                            .zip(mask.as_slice())
                            .for_each(|(g, m)| *g *= m);
                    }
                    d
                }
                _ => {
                    return Err(Error::Usage(format!(
                        "cache entry does not belong to a {} layer",
                        layer.kind_name()
                    )))
                }
            };
            blocks.push(grads);
        }
        Ok(blocks.into_iter().rev().flatten().collect())
    }

    /// Mean softmax cross-entropy over the batch and its gradient.
    pub fn loss_and_gradient(&self, x: &Matrix, labels: &[usize], rng: Option<&mut Rng>) -> Result<(f64, Vec<f64>)> {
        if labels.len() != x.rows() {
            return Err(Error::shape(
                "loss_and_gradient",
                format!("{} inputs", x.rows()),
                format!("{} labels", labels.len()),
            ));
        }
        let (logits, cache) = self.forward(x, rng)?;
        let (loss, d_logits) = mean_softmax_xent(&logits, labels)?;
        let grad = self.backward(&cache, &d_logits)?;
        Ok((loss, grad))
    }

    /// Mean loss in eval semantics.
    pub fn loss(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        let logits = self.predict(x)?;
        Ok(mean_softmax_xent(&logits, labels)?.0)
    }

    /// Distance of the batch from the nearest non-differentiable point of any
    /// layer: `|a_i - c_i|` for Lp signals, `|z|` for rectifier/abs inputs and
    /// the top-two gap of every maxout group.
    pub fn kink_margin(&self, x: &Matrix) -> Result<f64> {
        let mut eval = self.clone();
        eval.mode = Mode::Eval;
        let (_, cache) = eval.forward(x, None)?;
        let mut margin = f64::INFINITY;
        for (layer, lc) in self.layers.iter().zip(&cache.layers) {
            match (layer, lc) {
                (Layer::Dense { activation, .. }, LayerCache::Dense { pre, .. }) if activation.has_kink() => {
                    margin = pre.as_slice().iter().fold(margin, |m, z| m.min(z.abs()));
                }
                (Layer::Lp(p), LayerCache::Lp(c)) => margin = margin.min(p.min_deviation(c)),
                (Layer::Maxout(m), LayerCache::Maxout { input, .. }) => {
                    let z = m.linear.forward(input)?;
                    for row in z.iter_rows() {
                        margin = margin.min(layers::maxout_margin(row, m.group));
                    }
                }
                _ => {}
            }
        }
        Ok(margin)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = NetworkDocument {
            schema: NETWORK_SCHEMA.to_string(),
            seed: self.seed,
            spec: self.spec.clone(),
            params: self.flatten(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NetworkDocument = serde_json::from_str(text)?;
        if doc.schema != NETWORK_SCHEMA {
            return Err(Error::Format {
                location: "schema".into(),
                message: format!("expected `{NETWORK_SCHEMA}`, found `{}`", doc.schema),
            });
        }
        let mut net = Network::new(doc.spec, doc.seed)?;
        net.unflatten(&doc.params)?;
        Ok(net)
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean loss over rows and the per-row upstream scaled by `1 / batch`.
pub fn mean_softmax_xent(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let n = logits.rows();
    let mut d = Matrix::zeros(n, logits.cols());
    let mut total = 0.0;
    if n == 0 {
        return Ok((0.0, d));
    }
    let scale = 1.0 / n as f64;
    for (i, &label) in labels.iter().enumerate() {
        let (loss, g) = layers::softmax_xent(logits.row(i), label)?;
        total += loss;
        d.row_mut(i).iter_mut().zip(g).for_each(|(dst, v)| *dst = v * scale);
    }
    Ok((total * scale, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss_batch(seed: u64, n: usize, dim: usize, classes: usize) -> (Matrix, Vec<usize>) {
        let mut rng = Rng::new(seed);
        let x = Matrix::new(n, dim, (0..n * dim).map(|_| rng.normal()).collect()).unwrap();
        let y = (0..n).map(|_| rng.below(classes)).collect();
        (x, y)
    }

    #[test]
    fn identity_network() {
        let spec = NetworkSpec {
            input_dim: 3,
            layers: vec![LayerSpec::Dense {
                out: 3,
                activation: Activation::Identity,
            }],
        };
        let mut net = Network::new(spec, 0).unwrap();
        if let Layer::Dense { params, .. } = &mut net.layers_mut()[0] {
            params.weights = Matrix::identity(3);
            params.bias = vec![0.0; 3];
        }
        let x = Matrix::row_vector(&[1.0, -2.0, 0.5]);
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn lp_then_linear_is_composition() {
        let spec = NetworkSpec::lp_classifier(2, 2, 2, OrderInit::Learned { initial_p: 3.0 }, 2);
        let net = Network::new(spec, 4).unwrap();
        let x = Matrix::row_vector(&[0.7, -1.1]);
        let (Layer::Lp(lp), Layer::Dense { params, .. }) = (&net.layers()[0], &net.layers()[1]) else {
            panic!("unexpected layers");
        };
        let (u, _) = lp.forward(&x).unwrap();
        let expect = params.forward(&u).unwrap();
        assert_eq!(net.predict(&x).unwrap(), expect);
    }

    #[test]
    fn dropout_is_noop_in_eval_mode() {
        let spec = NetworkSpec {
            input_dim: 4,
            layers: vec![
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense {
                    out: 2,
                    activation: Activation::Identity,
                },
            ],
        };
        let mut net = Network::new(spec.clone(), 1).unwrap();
        let x = Matrix::row_vector(&[1.0, 2.0, 3.0, 4.0]);
        let a = net.forward(&x, None).unwrap().0;
        let b = net.forward(&x, None).unwrap().0;
        assert_eq!(a, b);
        net.set_mode(Mode::Train);
        assert!(matches!(net.forward(&x, None), Err(Error::Usage(_))));
        let mut rng = Rng::new(2);
        let c = net.forward(&x, Some(&mut rng)).unwrap().0;
        assert_ne!(a, c);
        assert_eq!(net.predict(&x).unwrap(), a);
    }

    #[test]
    fn flatten_roundtrip_exact() {
        let spec = NetworkSpec {
            input_dim: 3,
            layers: vec![
                LayerSpec::Lp { units: 2, group: 3, order: OrderInit::Learned { initial_p: 3.0 } },
                LayerSpec::Maxout { units: 2, group: 2 },
                LayerSpec::Lp { units: 1, group: 2, order: OrderInit::Fixed { p: 2.0 } },
                LayerSpec::Dense { out: 2, activation: Activation::Identity },
            ],
        };
        let mut net = Network::new(spec, 3).unwrap();
        let mut rng = Rng::new(9);
        let v: Vec<f64> = (0..net.param_count()).map(|_| rng.normal()).collect();
        net.unflatten(&v).unwrap();
        assert_eq!(net.flatten(), v);
        let blocks = net.param_blocks();
        assert_eq!(blocks.last().unwrap().1.end, v.len());
        assert!(net.unflatten(&v[1..]).is_err());
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let spec = NetworkSpec::lp_classifier(2, 3, 2, OrderInit::Learned { initial_p: 3.0 }, 2);
        let net = Network::new(spec, 5).unwrap();
        let (x, _) = gauss_batch(1, 4, 2, 2);
        let (_, cache) = net.forward(&x, None).unwrap();
        let g = net.backward(&cache, &Matrix::zeros(4, 2)).unwrap();
        assert_eq!(g.len(), net.param_count());
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_batch_same_mean_gradient() {
        let spec = NetworkSpec {
            input_dim: 3,
            layers: vec![
                LayerSpec::Lp { units: 2, group: 2, order: OrderInit::Learned { initial_p: 3.0 } },
                LayerSpec::Dense { out: 4, activation: Activation::Tanh },
                LayerSpec::Dense { out: 3, activation: Activation::Identity },
            ],
        };
        let net = Network::new(spec, 6).unwrap();
        let (x, y) = gauss_batch(2, 5, 3, 3);
        let (l1, g1) = net.loss_and_gradient(&x, &y, None).unwrap();
        let idx: Vec<usize> = (0..5).chain(0..5).collect();
        let x2 = x.select_rows(&idx);
        let y2: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
        let (l2, g2) = net.loss_and_gradient(&x2, &y2, None).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_cache_is_usage_error() {
        let a = Network::new(NetworkSpec::lp_classifier(2, 2, 2, OrderInit::Fixed { p: 2.0 }, 2), 1).unwrap();
        let b = Network::new(
            NetworkSpec {
                input_dim: 2,
                layers: vec![LayerSpec::Dense { out: 2, activation: Activation::Identity }],
            },
            1,
        )
        .unwrap();
        let x = Matrix::row_vector(&[0.3, 0.4]);
        let (_, cache) = b.forward(&x, None).unwrap();
        assert!(matches!(a.backward(&cache, &Matrix::zeros(1, 2)), Err(Error::Usage(_))));
    }

    #[test]
    fn shape_mismatch_on_input() {
        let net = Network::new(NetworkSpec::lp_classifier(2, 2, 2, OrderInit::Fixed { p: 2.0 }, 2), 1).unwrap();
        assert!(matches!(net.forward(&Matrix::row_vector(&[1.0, 2.0, 3.0]), None), Err(Error::Shape { .. })));
    }

    #[test]
    fn json_roundtrip_bit_exact() {
        let spec = NetworkSpec {
            input_dim: 2,
            layers: vec![
                LayerSpec::Lp { units: 3, group: 2, order: OrderInit::Learned { initial_p: 3.0 } },
                LayerSpec::Dropout { rate: 0.2 },
                LayerSpec::Dense { out: 2, activation: Activation::Identity },
            ],
        };
        let mut net = Network::new(spec, 77).unwrap();
        let mut rng = Rng::new(1);
        let v: Vec<f64> = (0..net.param_count()).map(|_| rng.normal() * 1e-3 + rng.uniform()).collect();
        net.unflatten(&v).unwrap();
        let back = Network::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back.flatten(), v);
        assert_eq!(back.spec(), net.spec());
        assert_eq!(back.seed(), 77);
        let bad = net.to_json().unwrap().replace(NETWORK_SCHEMA, "lpunit.network/v0");
        assert!(Network::from_json(&bad).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = NetworkSpec {
            input_dim: 2,
            layers: vec![LayerSpec::Lp { units: 2, group: 2, order: OrderInit::Learned { initial_p: 1.0 } }],
        };
        assert!(Network::new(bad, 0).is_err());
        let bad = NetworkSpec { input_dim: 2, layers: vec![LayerSpec::Dropout { rate: 1.0 }] };
        assert!(Network::new(bad, 0).is_err());
    }
}
