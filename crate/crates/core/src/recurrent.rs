//! Deep-transition, deep-output recurrent network.
//!
//! ```text
//! h_t    = tanh(W_sᵀ f([h_{t-1}; x_t]) + b_s)
//! logits = R_ᵀ maxout(W_oᵀ h_t + b_o) + b_r
//! ```
//!
//! `f` is either a layer of Lp units or a tanh affine layer. Its filter
//! matrix acts on the concatenation `[h_{t-1}; x_t]`, so the first
//! `state_dim` rows play the role of the recurrent matrix `U` and the
//! remaining rows the input matrix `V`. Targets are binary vectors scored
//! with independent Bernoulli likelihoods; `h_0 = 0`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::datasets::Sequence;
use crate::error::{Error, Result};
use crate::layers::{self, LinearParams, MaxoutParams};
use crate::lp::{LpCache, LpLayerParams, Order, OrderInit};
use crate::rng::{stream, Rng};
use crate::tensor::{self, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransitionSpec {
    Lp { units: usize, group: usize, order: OrderInit },
    Tanh { units: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnSpec {
    pub input_dim: usize,
    pub state_dim: usize,
    pub transition: TransitionSpec,
    pub output_units: usize,
    #[serde(default = "default_output_group")]
    pub output_group: usize,
    pub output_dim: usize,
    /// Dropout on the transition layer's outputs during training.
    #[serde(default)]
    pub dropout: f64,
}

fn default_output_group() -> usize {
    2
}

pub const RNN_SCHEMA: &str = "lpunit.rnn/v1";

#[derive(Serialize, Deserialize)]
struct RnnDocument {
    schema: String,
    spec: RnnSpec,
    params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transition {
    Lp(LpLayerParams),
    Tanh(LinearParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtRnnParams {
    pub spec: RnnSpec,
    pub transition: Transition,
    pub state: LinearParams,
    pub output: MaxoutParams,
    pub readout: LinearParams,
}

#[derive(Debug, Clone)]
enum TransitionCache {
    Lp(LpCache),
    Tanh { input: Matrix, out: Matrix },
}

#[derive(Debug, Clone)]
struct StepCache {
    transition: TransitionCache,
    mask: Option<Vec<f64>>,
    intermediate: Matrix,
    state: Matrix,
    maxout_winners: Vec<usize>,
    maxout_out: Matrix,
    d_logits: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct BpttOptions {
    /// Gradient flows back at most this many steps (segment-wise truncation).
    pub truncation: Option<usize>,
    /// Draws dropout masks when set; evaluation semantics otherwise.
    pub dropout_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpttResult {
    /// Mean over sequences of the per-sequence summed loss.
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Total number of scored time steps.
    pub steps: usize,
    pub max_abs_state: f64,
}

impl DtRnnParams {
    pub fn new(spec: RnnSpec, seed: u64) -> Result<Self> {
        if spec.input_dim == 0 || spec.state_dim == 0 || spec.output_dim == 0 || spec.output_units == 0 {
            return Err(Error::Argument("RNN dimensions must all be >= 1".into()));
        }
        if !(0.0..1.0).contains(&spec.dropout) {
            return Err(Error::Argument(format!("dropout rate must be in [0, 1), got {}", spec.dropout)));
        }
        let mut rng = Rng::substream(seed, stream::INIT);
        let joint = spec.state_dim + spec.input_dim;
        let (transition, inter) = match spec.transition {
            TransitionSpec::Lp { units, group, order } => {
                (Transition::Lp(LpLayerParams::init(joint, units, group, order, &mut rng)?), units)
            }
            TransitionSpec::Tanh { units } => (Transition::Tanh(LinearParams::init(joint, units, &mut rng)?), units),
        };
        if inter == 0 {
            return Err(Error::Argument("transition needs at least one unit".into()));
        }
        let state = LinearParams::init(inter, spec.state_dim, &mut rng)?;
        let output = MaxoutParams::init(spec.state_dim, spec.output_units, spec.output_group, &mut rng)?;
        let readout = LinearParams::init(spec.output_units, spec.output_dim, &mut rng)?;
        Ok(Self {
            spec,
            transition,
            state,
            output,
            readout,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.spec.state_dim
    }

    fn linear_blocks(&self) -> [&LinearParams; 3] {
        [&self.state, &self.output.linear, &self.readout]
    }

    pub fn param_count(&self) -> usize {
        let t = match &self.transition {
            Transition::Lp(p) => p.param_count(),
            Transition::Tanh(l) => l.weights.as_slice().len() + l.bias.len(),
        };
        t + self
            .linear_blocks()
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum::<usize>()
    }

    /// Name and flat-vector range of every parameter block.
    pub fn param_blocks(&self) -> Vec<(String, Range<usize>)> {
        let mut sizes: Vec<(String, usize)> = match &self.transition {
            Transition::Lp(p) => {
                let mut s = vec![
                    ("transition.lp.weights".to_string(), p.weights.as_slice().len()),
                    ("transition.lp.centers".to_string(), p.centers.len()),
                ];
                if p.learns_order() {
                    s.push(("transition.lp.rho".to_string(), p.units()));
                }
                s
            }
            Transition::Tanh(l) => vec![
                ("transition.tanh.weights".to_string(), l.weights.as_slice().len()),
                ("transition.tanh.bias".to_string(), l.bias.len()),
            ],
        };
        for (name, l) in ["state", "output.maxout", "readout"].iter().zip(self.linear_blocks()) {
            sizes.push((format!("{name}.weights"), l.weights.as_slice().len()));
            sizes.push((format!("{name}.bias"), l.bias.len()));
        }
        let mut at = 0;
        sizes
            .into_iter()
            .map(|(name, len)| {
                at += len;
                (name, at - len..at)
            })
            .collect()
    }

    /// Flat layout: transition (weights, centers/bias, ρ), state, maxout, readout.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        match &self.transition {
            Transition::Lp(p) => {
                v.extend_from_slice(p.weights.as_slice());
                v.extend_from_slice(&p.centers);
                if let Order::Learned { rho } = &p.order {
                    v.extend_from_slice(rho);
                }
            }
            Transition::Tanh(l) => {
                v.extend_from_slice(l.weights.as_slice());
                v.extend_from_slice(&l.bias);
            }
        }
        for l in self.linear_blocks() {
            v.extend_from_slice(l.weights.as_slice());
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn unflatten(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.param_count() {
            return Err(Error::shape(
                "DtRnnParams::unflatten",
                format!("{} parameters", self.param_count()),
                format!("vector of length {}", v.len()),
            ));
        }
        let mut at = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&v[at..at + dst.len()]);
            at += dst.len();
        };
        match &mut self.transition {
            Transition::Lp(p) => {
                take(p.weights.as_mut_slice());
                take(&mut p.centers);
                if let Order::Learned { rho } = &mut p.order {
                    take(rho);
                }
            }
            Transition::Tanh(l) => {
                take(l.weights.as_mut_slice());
                take(&mut l.bias);
            }
        }
        for l in [&mut self.state, &mut self.output.linear, &mut self.readout] {
            take(l.weights.as_mut_slice());
            take(&mut l.bias);
        }
        Ok(())
    }

    pub fn lp_orders(&self) -> Vec<f64> {
        match &self.transition {
            Transition::Lp(p) => p.orders(),
            Transition::Tanh(_) => Vec::new(),
        }
    }

    fn joint_input(&self, h_prev: &[f64], x: &[f64]) -> Result<Matrix> {
        if h_prev.len() != self.spec.state_dim || x.len() != self.spec.input_dim {
            return Err(Error::shape(
                "dtrnn_step",
                format!("state {} / input {}", h_prev.len(), x.len()),
                format!("state_dim {} / input_dim {}", self.spec.state_dim, self.spec.input_dim),
            ));
        }
        let mut joint = Vec::with_capacity(h_prev.len() + x.len());
        joint.extend_from_slice(h_prev);
        joint.extend_from_slice(x);
        Ok(Matrix::row_vector(&joint))
    }

    fn transition_forward(&self, joint: &Matrix) -> Result<(Matrix, TransitionCache)> {
        match &self.transition {
            Transition::Lp(p) => {
                let (out, cache) = p.forward(joint)?;
                Ok((out, TransitionCache::Lp(cache)))
            }
            Transition::Tanh(l) => {
                let out = l.forward(joint)?.map(f64::tanh);
                Ok((
                    out.clone(),
                    TransitionCache::Tanh {
                        input: joint.clone(),
                        out,
                    },
                ))
            }
        }
    }

    fn state_from_intermediate(&self, inter: &Matrix) -> Result<Matrix> {
        Ok(self.state.forward(inter)?.map(f64::tanh))
    }

    /// One transition `h_{t-1}, x_t ↦ h_t` (no dropout).
    pub fn dtrnn_step(&self, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let joint = self.joint_input(h_prev, x)?;
        let (inter, _) = self.transition_forward(&joint)?;
        Ok(self.state_from_intermediate(&inter)?.into_vec())
    }

    /// Per-dimension Bernoulli logits for state `h`.
    pub fn dotrnn_output(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.spec.state_dim {
            return Err(Error::shape(
                "dotrnn_output",
                format!("state of length {}", h.len()),
                format!("state_dim {}", self.spec.state_dim),
            ));
        }
        let (m, _, _) = self.output.forward(&Matrix::row_vector(h))?;
        Ok(self.readout.forward(&m)?.into_vec())
    }

    /// Runs the network over `seq.inputs`, returning the states `h_1..h_T`.
    pub fn run(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut h = vec![0.0; self.spec.state_dim];
        let mut states = Vec::with_capacity(inputs.len());
        for x in inputs {
            h = self.dtrnn_step(&h, x)?;
            states.push(h.clone());
        }
        Ok(states)
    }

    /// Summed negative log-likelihood of one sequence (eval semantics).
    pub fn sequence_nll(&self, seq: &Sequence) -> Result<f64> {
        let states = self.run(&seq.inputs)?;
        let mut total = 0.0;
        for (h, y) in states.iter().zip(&seq.targets) {
            total += layers::sigmoid_xent(&self.dotrnn_output(h)?, y)?.0;
        }
        Ok(total)
    }

    fn sequence_grad(&self, seq: &Sequence, opts: &BpttOptions, index: usize) -> Result<(f64, Vec<f64>, f64)> {
        if seq.inputs.len() != seq.targets.len() {
            return Err(Error::shape(
                "bptt",
                format!("{} inputs", seq.inputs.len()),
                format!("{} targets", seq.targets.len()),
            ));
        }
        let mut rng = opts
            .dropout_seed
            .filter(|_| self.spec.dropout > 0.0)
            .map(|s| Rng::substream(Rng::derive_seed(s, stream::DROPOUT, index as u64), stream::DROPOUT));

        let sdim = self.spec.state_dim;
        let mut h = vec![0.0; sdim];
        let mut caches = Vec::with_capacity(seq.inputs.len());
        let mut loss = 0.0;
        let mut max_abs = 0.0_f64;
        for (x, y) in seq.inputs.iter().zip(&seq.targets) {
            let joint = self.joint_input(&h, x)?;
            let (mut inter, transition) = self.transition_forward(&joint)?;
            let mask = match rng.as_mut() {
                Some(rng) => {
                    let m = layers::dropout_mask(rng, self.spec.dropout, inter.cols())?;
                    inter.as_mut_slice().iter_mut().zip(&m).for_each(|(v, m)| *v *= m);
                    Some(m)
                }
                None => None,
            };
            let state = self.state_from_intermediate(&inter)?;
            max_abs = max_abs.max(state.max_abs());
            let (m, _, winners) = self.output.forward(&state)?;
            let logits = self.readout.forward(&m)?;
            let (l, d_logits) = layers::sigmoid_xent(logits.as_slice(), y)?;
            loss += l;
            h = state.as_slice().to_vec();
            caches.push(StepCache {
                transition,
                mask,
                intermediate: inter,
                state,
                maxout_winners: winners,
                maxout_out: m,
                d_logits,
            });
        }

        let mut g_trans_w = match &self.transition {
            Transition::Lp(p) => Matrix::zeros(p.weights.rows(), p.weights.cols()),
            Transition::Tanh(l) => Matrix::zeros(l.weights.rows(), l.weights.cols()),
        };
        let mut g_trans_b = vec![0.0; g_trans_w.cols()];
        let rho_len = match &self.transition {
            Transition::Lp(p) if p.learns_order() => p.units(),
            _ => 0,
        };
        let mut g_rho = vec![0.0; rho_len];
        let mut g_lin: Vec<(Matrix, Vec<f64>)> = self
            .linear_blocks()
            .iter()
            .map(|l| (Matrix::zeros(l.weights.rows(), l.weights.cols()), vec![0.0; l.bias.len()]))
            .collect();

        let mut d_h_next = vec![0.0; sdim];
        for t in (0..caches.len()).rev() {
            let c = &caches[t];
            // Output path.
            let d_logits = Matrix::row_vector(&c.d_logits);
            let (d_m, d_rw, d_rb) = self.readout.backward(&c.maxout_out, &d_logits)?;
            accumulate(&mut g_lin[2], &d_rw, &d_rb);
            let (d_h_out, d_ow, d_ob) = self.output.backward(&c.state, &c.maxout_winners, &d_m)?;
            accumulate(&mut g_lin[1], &d_ow, &d_ob);

            // State nonlinearity.
            let mut d_z = d_h_out;
            for ((g, &next), &hv) in d_z.as_mut_slice().iter_mut().zip(&d_h_next).zip(c.state.as_slice()) {
                *g = (*g + next) * (1.0 - hv * hv);
            }
            let (mut d_inter, d_sw, d_sb) = self.state.backward(&c.intermediate, &d_z)?;
            accumulate(&mut g_lin[0], &d_sw, &d_sb);
            if let Some(mask) = &c.mask {
                d_inter.as_mut_slice().iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
            }

            // Transition.
            let d_joint = match (&self.transition, &c.transition) {
                (Transition::Lp(p), TransitionCache::Lp(cache)) => {
                    let (d_joint, g) = p.backward(&d_inter, cache)?;
                    add_into(g_trans_w.as_mut_slice(), g.d_weights.as_slice());
                    add_into(&mut g_trans_b, &g.d_centers);
                    add_into(&mut g_rho, &g.d_rho);
                    d_joint
                }
                (Transition::Tanh(l), TransitionCache::Tanh { input, out }) => {
                    let mut d_pre = d_inter;
                    d_pre
                        .as_mut_slice()
                        .iter_mut()
                        .zip(out.as_slice())
                        .for_each(|(g, &o)| *g *= 1.0 - o * o);
                    let (d_joint, d_w, d_b) = l.backward(input, &d_pre)?;
                    add_into(g_trans_w.as_mut_slice(), d_w.as_slice());
                    add_into(&mut g_trans_b, &d_b);
                    d_joint
                }
                _ => return Err(Error::Usage("transition cache kind mismatch".into())),
            };
            let segment_start = opts.truncation.is_some_and(|k| k > 0 && t % k == 0);
            if segment_start {
                d_h_next.iter_mut().for_each(|g| *g = 0.0);
            } else {
                d_h_next.copy_from_slice(&d_joint.as_slice()[..sdim]);
            }
        }

        let mut grad = Vec::with_capacity(self.param_count());
        grad.extend(g_trans_w.into_vec());
        grad.extend(g_trans_b);
        grad.extend(g_rho);
        for (w, b) in g_lin {
            grad.extend(w.into_vec());
            grad.extend(b);
        }
        Ok((loss, grad, max_abs))
    }

    /// Backpropagation through time over a batch of sequences. Loss and
    /// gradient are means over sequences of per-sequence sums over time.
    pub fn bptt(&self, batch: &[Sequence], opts: &BpttOptions) -> Result<BpttResult> {
        let mut losses = Vec::with_capacity(batch.len());
        let mut grads = Vec::with_capacity(batch.len());
        let mut steps = 0;
        let mut max_abs_state = 0.0_f64;
        for (i, seq) in batch.iter().enumerate() {
            let (loss, grad, m) = self.sequence_grad(seq, opts, i)?;
            losses.push(loss);
            grads.push(grad);
            steps += seq.inputs.len();
            max_abs_state = max_abs_state.max(m);
        }
        let scale = if batch.is_empty() { 0.0 } else { 1.0 / batch.len() as f64 };
        let mut grad = pairwise_sum(grads).unwrap_or_else(|| vec![0.0; self.param_count()]);
        grad.iter_mut().for_each(|g| *g *= scale);
        let loss = pairwise_sum(losses.into_iter().map(|l| vec![l]).collect())
            .map_or(0.0, |v| v[0] * scale);
        Ok(BpttResult {
            loss,
            grad,
            steps,
            max_abs_state,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = RnnDocument {
            schema: RNN_SCHEMA.to_string(),
            spec: self.spec.clone(),
            params: self.flatten(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RnnDocument = serde_json::from_str(text)?;
        if doc.schema != RNN_SCHEMA {
            return Err(Error::Format {
                location: "schema".into(),
                message: format!("expected `{RNN_SCHEMA}`, found `{}`", doc.schema),
            });
        }
        let mut rnn = Self::new(doc.spec, 0)?;
        rnn.unflatten(&doc.params)?;
        Ok(rnn)
    }

    /// Smallest distance to an Lp kink or maxout tie along the sequence.
    pub fn kink_margin(&self, seq: &Sequence) -> Result<f64> {
        let mut h = vec![0.0; self.spec.state_dim];
        let mut margin = f64::INFINITY;
        for x in &seq.inputs {
            let joint = self.joint_input(&h, x)?;
            let (inter, cache) = self.transition_forward(&joint)?;
            if let (Transition::Lp(p), TransitionCache::Lp(c)) = (&self.transition, &cache) {
                margin = margin.min(p.min_deviation(c));
            }
            let state = self.state_from_intermediate(&inter)?;
            let z = self.output.linear.forward(&state)?;
            margin = margin.min(layers::maxout_margin(z.as_slice(), self.output.group));
            h = state.into_vec();
        }
        Ok(margin)
    }
}

fn accumulate(dst: &mut (Matrix, Vec<f64>), d_w: &Matrix, d_b: &[f64]) {
    add_into(dst.0.as_mut_slice(), d_w.as_slice());
    add_into(&mut dst.1, d_b);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// Pairwise (tree) summation of equal-length vectors.
fn pairwise_sum(mut parts: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                add_into(&mut a, &b);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop()
}

/// Rescales `grads` to norm `threshold` when its L2 norm exceeds it. Returns
/// the norm before clipping.
pub fn clip_gradient_norm(grads: &mut [f64], threshold: f64) -> f64 {
    assert!(threshold > 0.0, "clip threshold must be positive");
    let norm = tensor::l2_norm(grads);
    if norm > threshold {
        let scale = threshold / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradient, KINK_MARGIN};

    fn tiny_spec(transition: TransitionSpec) -> RnnSpec {
        RnnSpec {
            input_dim: 2,
            state_dim: 2,
            transition,
            output_units: 2,
            output_group: 2,
            output_dim: 2,
            dropout: 0.0,
        }
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let p = DtRnnParams::new(tiny_spec(TransitionSpec::Lp { units: 2, group: 2, order: OrderInit::Learned { initial_p: 3.0 } }), 9).unwrap();
        let back = DtRnnParams::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
    }

    fn random_sequence(rng: &mut Rng, len: usize, dim: usize) -> Sequence {
        let inputs = (0..len).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect();
        let targets = (0..len)
            .map(|_| (0..dim).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }).collect())
            .collect();
        Sequence { inputs, targets }
    }

    /// Rescales ρ into [-2, 3] and resamples until away from kinks.
    fn check_instance(spec: RnnSpec, seed: u64, len: usize) -> (DtRnnParams, Vec<Sequence>) {
        let mut rng = Rng::new(seed);
        for attempt in 0..500 {
            let mut p = DtRnnParams::new(spec.clone(), seed * 1000 + attempt).unwrap();
            if let Transition::Lp(lp) = &mut p.transition {
                lp.centers.iter_mut().for_each(|c| *c = rng.range(-0.5, 0.5));
                if let Order::Learned { rho } = &mut lp.order {
                    rho.iter_mut().for_each(|r| *r = rng.range(-2.0, 3.0));
                }
            }
            let batch: Vec<Sequence> = (0..2).map(|_| random_sequence(&mut rng, len, 2)).collect();
            let margin = batch
                .iter()
                .map(|s| p.kink_margin(s).unwrap())
                .fold(f64::INFINITY, f64::min);
            if margin >= KINK_MARGIN {
                return (p, batch);
            }
        }
        panic!("no kink-free instance");
    }

    fn bptt_check(p: &DtRnnParams, batch: &[Sequence], opts: &BpttOptions) -> f64 {
        let analytic = p.bptt(batch, opts).unwrap().grad;
        let mut probe = p.clone();
        check_gradient(&p.flatten(), &analytic, 1e-5, |theta| {
            probe.unflatten(theta)?;
            let total: f64 = batch.iter().map(|s| probe.sequence_nll(s).unwrap()).sum();
            Ok(total / batch.len() as f64)
        })
        .unwrap()
        .max_rel_error
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let mut p = DtRnnParams::new(tiny_spec(TransitionSpec::Lp { units: 2, group: 2, order: OrderInit::Learned { initial_p: 3.0 } }), 1).unwrap();
        let zeros = vec![0.0; p.param_count()];
        p.unflatten(&zeros).unwrap();
        assert_eq!(p.dtrnn_step(&[0.3, -0.9], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        let logits = p.dotrnn_output(&[0.2, 0.1]).unwrap();
        assert_eq!(logits, vec![0.0, 0.0]);
        let (loss, _) = layers::sigmoid_xent(&logits, &[1.0, 0.0]).unwrap();
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn state_stays_bounded_for_large_weights() {
        let mut p = DtRnnParams::new(tiny_spec(TransitionSpec::Lp { units: 3, group: 2, order: OrderInit::Learned { initial_p: 3.0 } }), 2).unwrap();
        let big: Vec<f64> = p.flatten().iter().map(|v| v * 1e3).collect();
        p.unflatten(&big).unwrap();
        let inputs: Vec<Vec<f64>> = (0..50).map(|t| vec![t as f64, -(t as f64)]).collect();
        for h in p.run(&inputs).unwrap() {
            assert!(h.iter().all(|v| v.abs() <= 1.0 && v.is_finite()));
        }
    }

    #[test]
    fn shape_errors() {
        let p = DtRnnParams::new(tiny_spec(TransitionSpec::Tanh { units: 3 }), 3).unwrap();
        assert!(p.dtrnn_step(&[0.0; 3], &[0.0; 2]).is_err());
        assert!(p.dotrnn_output(&[0.0; 5]).is_err());
    }

    #[test]
    fn bptt_matches_finite_differences_lp() {
        let spec = tiny_spec(TransitionSpec::Lp { units: 2, group: 2, order: OrderInit::Learned { initial_p: 3.0 } });
        for seed in 0..10 {
            let (p, batch) = check_instance(spec.clone(), seed, 3);
            let err = bptt_check(&p, &batch, &BpttOptions::default());
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn bptt_matches_finite_differences_tanh() {
        let spec = tiny_spec(TransitionSpec::Tanh { units: 3 });
        for seed in 0..5 {
            let (p, batch) = check_instance(spec.clone(), seed, 4);
            assert!(bptt_check(&p, &batch, &BpttOptions::default()) < 1e-4);
        }
    }

    #[test]
    fn single_step_and_truncation() {
        let spec = tiny_spec(TransitionSpec::Lp { units: 2, group: 2, order: OrderInit::Learned { initial_p: 3.0 } });
        let (p, batch) = check_instance(spec.clone(), 7, 1);
        assert!(bptt_check(&p, &batch, &BpttOptions::default()) < 1e-4);

        let (p, batch) = check_instance(spec, 8, 4);
        let full = p.bptt(&batch, &BpttOptions::default()).unwrap();
        let trunc = p.bptt(&batch, &BpttOptions { truncation: Some(4), dropout_seed: None }).unwrap();
        assert_eq!(full, trunc);
        let short = p.bptt(&batch, &BpttOptions { truncation: Some(2), dropout_seed: None }).unwrap();
        assert_eq!(full.loss, short.loss);
        assert_ne!(full.grad, short.grad);
    }

    #[test]
    fn clip_examples() {
        let mut g = vec![6.0, 8.0];
        assert_eq!(clip_gradient_norm(&mut g, 5.0), 10.0);
        assert!((tensor::l2_norm(&g) - 5.0).abs() < 1e-12);
        assert_eq!(g, vec![3.0, 4.0]);
        let once = g.clone();
        clip_gradient_norm(&mut g, 5.0);
        assert_eq!(g, once);
        let mut small = vec![0.6, 0.8];
        clip_gradient_norm(&mut small, 5.0);
        assert_eq!(small, vec![0.6, 0.8]);
        let mut zero = vec![0.0; 3];
        clip_gradient_norm(&mut zero, 5.0);
        assert_eq!(zero, vec![0.0; 3]);
    }

    #[test]
    fn pairwise_sum_is_order_insensitive() {
        let mut rng = Rng::new(4);
        let parts: Vec<Vec<f64>> = (0..37).map(|_| rng.uniform_vec(-1.0, 1.0, 5).unwrap()).collect();
        let a = pairwise_sum(parts.clone()).unwrap();
        let mut rev = parts;
        rev.reverse();
        let b = pairwise_sum(rev).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn flatten_roundtrip() {
        let mut p = DtRnnParams::new(tiny_spec(TransitionSpec::Lp { units: 2, group: 3, order: OrderInit::Fixed { p: 2.0 } }), 5).unwrap();
        let mut rng = Rng::new(1);
        let v: Vec<f64> = (0..p.param_count()).map(|_| rng.normal()).collect();
        p.unflatten(&v).unwrap();
        assert_eq!(p.flatten(), v);
    }
}
