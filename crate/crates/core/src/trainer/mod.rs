//! Minibatch SGD with momentum, early stopping on a holdout split, order
//! statistics, random search and multi-seed experiments.

mod experiments;
mod report;
mod search;

pub use experiments::{
    curvature_trial, multi_seed_success_rate, worker_threads, CurvatureProtocol, MultiSeedSummary, SeedOutcome,
    ToyModel, THREADS_ENV,
};
pub use report::{
    format_order_table, EpochRecord, HistogramBin, Metrics, OrderReport, OrderStats, ReferenceOrders, StopReason,
    TrainReport, ORDER_BIN_WIDTH, REFERENCE_ORDERS, REPORT_SCHEMA,
};
pub use search::{random_search, Assignment, Distribution, LeaderboardEntry, SearchOutcome, SearchSpace};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datasets::{LabeledDataset, Sequence, SequenceBatch};
use crate::error::{Error, Result};
use crate::lp::OrderInit;
use crate::network::{LayerSpec, Mode, Network, NetworkSpec};
use crate::recurrent::{clip_gradient_norm, BpttOptions, DtRnnParams, RnnSpec, TransitionSpec};
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    /// 0 means full batch.
    #[serde(default)]
    pub batch_size: usize,
    pub epochs: usize,
    /// Step size at epoch `e` is `learning_rate / (1 + lr_decay · (e − 1))`.
    #[serde(default)]
    pub lr_decay: f64,
    /// Overrides the rate of every dropout layer when set.
    #[serde(default)]
    pub dropout: Option<f64>,
    /// Overrides the initial order of every learned-order Lp layer when set.
    #[serde(default)]
    pub initial_order: Option<f64>,
    /// Gradient-norm clipping threshold.
    #[serde(default)]
    pub clip_norm: Option<f64>,
    /// BPTT truncation length for recurrent models.
    #[serde(default)]
    pub truncation: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Stop after this many epochs without improvement.
    #[serde(default)]
    pub patience: Option<usize>,
    #[serde(default = "default_valid_fraction")]
    pub valid_fraction: f64,
    /// Stop as soon as the training error reaches zero.
    #[serde(default)]
    pub stop_at_zero_error: bool,
}

fn default_valid_fraction() -> f64 {
    0.2
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: 0,
            epochs: 100,
            lr_decay: 0.0,
            dropout: None,
            initial_order: None,
            clip_norm: None,
            truncation: None,
            seed: 0,
            patience: None,
            valid_fraction: default_valid_fraction(),
            stop_at_zero_error: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.lr_decay >= 0.0) {
            return bad(format!("lr_decay must be >= 0, got {}", self.lr_decay));
        }
        if !(0.0..1.0).contains(&self.valid_fraction) {
            return bad(format!("valid_fraction must be in [0, 1), got {}", self.valid_fraction));
        }
        if let Some(rate) = self.dropout {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("dropout must be in [0, 1), got {rate}"));
            }
        }
        if let Some(p) = self.initial_order {
            if !(p > 1.0) {
                return bad(format!("initial_order must be > 1, got {p}"));
            }
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip_norm must be > 0, got {c}"));
            }
        }
        if self.truncation == Some(0) {
            return bad("truncation must be >= 1".into());
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate / (1.0 + self.lr_decay * (epoch.saturating_sub(1)) as f64)
    }

    /// Applies the dropout and initial-order overrides to a network spec.
    pub fn apply_to_network(&self, spec: &NetworkSpec) -> NetworkSpec {
        let mut spec = spec.clone();
        for layer in &mut spec.layers {
            match layer {
                LayerSpec::Dropout { rate } => {
                    if let Some(r) = self.dropout {
                        *rate = r;
                    }
                }
                LayerSpec::Lp { order: OrderInit::Learned { initial_p }, .. } => {
                    if let Some(p) = self.initial_order {
                        *initial_p = p;
                    }
                }
                _ => {}
            }
        }
        spec
    }

    pub fn apply_to_rnn(&self, spec: &RnnSpec) -> RnnSpec {
        let mut spec = spec.clone();
        if let Some(r) = self.dropout {
            spec.dropout = r;
        }
        if let (Some(p), TransitionSpec::Lp { order: OrderInit::Learned { initial_p }, .. }) =
            (self.initial_order, &mut spec.transition)
        {
            *initial_p = p;
        }
        spec
    }
}

/// `v ← momentum·v − lr·g; θ ← θ + v`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::shape(
            "sgd_step",
            format!("{} parameters", params.len()),
            format!("{} gradients, {} velocities", grads.len(), velocity.len()),
        ));
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v - lr * g;
        *p += *v;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Split {
    Train,
    Valid,
    Test,
}

/// What the shared loop needs from a model and its data.
trait Learner {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, theta: &[f64]) -> Result<()>;
    fn train_len(&self) -> usize;
    fn gradient(&mut self, batch: &[usize], dropout_seed: u64) -> Result<(f64, Vec<f64>)>;
    fn metrics(&mut self, split: Split) -> Result<Option<Metrics>>;
    fn block_name(&self, index: usize) -> String;
    fn orders(&self) -> Vec<f64>;
}

struct NetLearner<'a> {
    net: Network,
    train: &'a LabeledDataset,
    valid: Option<LabeledDataset>,
    test: Option<&'a LabeledDataset>,
}

impl Learner for NetLearner<'_> {
    fn params(&self) -> Vec<f64> {
        self.net.flatten()
    }

    fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        self.net.unflatten(theta)
    }

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn gradient(&mut self, batch: &[usize], dropout_seed: u64) -> Result<(f64, Vec<f64>)> {
        let mut rng = Rng::substream(dropout_seed, stream::DROPOUT);
        self.net.set_mode(Mode::Train);
        let out = if batch.len() == self.train.len() && batch.iter().enumerate().all(|(i, &j)| i == j) {
            self.net.loss_and_gradient(&self.train.x, &self.train.labels, Some(&mut rng))
        } else {
            let sub = self.train.subset(batch);
            self.net.loss_and_gradient(&sub.x, &sub.labels, Some(&mut rng))
        };
        self.net.set_mode(Mode::Eval);
        out
    }

    fn metrics(&mut self, split: Split) -> Result<Option<Metrics>> {
        let data = match split {
            Split::Train => Some(self.train),
            Split::Valid => self.valid.as_ref(),
            Split::Test => self.test,
        };
        data.map(|d| classification_metrics(&self.net, d)).transpose()
    }

    fn block_name(&self, index: usize) -> String {
        block_of(self.net.param_blocks(), index)
    }

    fn orders(&self) -> Vec<f64> {
        self.net.lp_orders()
    }
}

fn block_of(blocks: Vec<(String, std::ops::Range<usize>)>, index: usize) -> String {
    blocks
        .into_iter()
        .find(|(_, r)| r.contains(&index))
        .map_or_else(|| format!("parameter {index}"), |(name, _)| name)
}

/// Mean cross-entropy, error rate and error count in eval mode.
pub fn classification_metrics(net: &Network, data: &LabeledDataset) -> Result<Metrics> {
    let mut eval = net.clone();
    eval.set_mode(Mode::Eval);
    let logits = eval.predict(&data.x)?;
    let (loss, _) = crate::network::mean_softmax_xent(&logits, &data.labels)?;
    let errors = logits
        .iter_rows()
        .zip(&data.labels)
        .filter(|(row, &label)| crate::network::argmax(row) != label)
        .count();
    Ok(Metrics {
        loss,
        error_rate: Some(if data.is_empty() { 0.0 } else { errors as f64 / data.len() as f64 }),
        errors: Some(errors),
    })
}

struct RnnLearner<'a> {
    rnn: DtRnnParams,
    train: Vec<Sequence>,
    valid: Option<Vec<Sequence>>,
    test: Option<&'a SequenceBatch>,
    truncation: Option<usize>,
    max_abs_state: f64,
}

impl RnnLearner<'_> {
    fn per_step_nll(&mut self, seqs: &[Sequence]) -> Result<Metrics> {
        let r = self.rnn.bptt(seqs, &BpttOptions::default())?;
        self.max_abs_state = self.max_abs_state.max(r.max_abs_state);
        let total = r.loss * seqs.len() as f64;
        Ok(Metrics {
            loss: if r.steps == 0 { 0.0 } else { total / r.steps as f64 },
            error_rate: None,
            errors: None,
        })
    }
}

impl Learner for RnnLearner<'_> {
    fn params(&self) -> Vec<f64> {
        self.rnn.flatten()
    }

    fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        self.rnn.unflatten(theta)
    }

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn gradient(&mut self, batch: &[usize], dropout_seed: u64) -> Result<(f64, Vec<f64>)> {
        let seqs: Vec<Sequence> = batch.iter().map(|&i| self.train[i].clone()).collect();
        let opts = BpttOptions {
            truncation: self.truncation,
            dropout_seed: (self.rnn.spec.dropout > 0.0).then_some(dropout_seed),
        };
        let r = self.rnn.bptt(&seqs, &opts)?;
        self.max_abs_state = self.max_abs_state.max(r.max_abs_state);
        Ok((r.loss, r.grad))
    }

    fn metrics(&mut self, split: Split) -> Result<Option<Metrics>> {
        let seqs = match split {
            Split::Train => Some(self.train.clone()),
            Split::Valid => self.valid.clone(),
            Split::Test => self.test.map(|b| b.sequences.clone()),
        };
        seqs.map(|s| self.per_step_nll(&s)).transpose()
    }

    fn block_name(&self, index: usize) -> String {
        block_of(self.rnn.param_blocks(), index)
    }

    fn orders(&self) -> Vec<f64> {
        self.rnn.lp_orders()
    }
}

/// Selection key: error rate when available, then loss.
fn selection_key(m: &Metrics) -> (f64, f64) {
    (m.error_rate.unwrap_or(m.loss), m.loss)
}

fn non_finite(learner: &dyn Learner, epoch: usize, step: usize, values: &[f64]) -> Error {
    let block = values
        .iter()
        .position(|v| !v.is_finite())
        .map_or_else(|| "loss".to_string(), |i| learner.block_name(i));
    Error::NonFinite { epoch, step, block }
}

struct LoopOutcome {
    epochs: Vec<EpochRecord>,
    best_epoch: usize,
    stop_reason: StopReason,
    initial_orders: Vec<f64>,
}

fn run_loop(learner: &mut dyn Learner, config: &TrainConfig) -> Result<LoopOutcome> {
    let initial_orders = learner.orders();
    let mut theta = learner.params();
    let mut velocity = vec![0.0; theta.len()];
    let mut shuffle_rng = Rng::substream(config.seed, stream::SHUFFLE);
    let n = learner.train_len();
    let batch_size = if config.batch_size == 0 { n.max(1) } else { config.batch_size };

    let record = |learner: &mut dyn Learner, epoch: usize, lr: f64| -> Result<EpochRecord> {
        Ok(EpochRecord {
            epoch,
            learning_rate: lr,
            train: learner.metrics(Split::Train)?.expect("training split always present"),
            valid: learner.metrics(Split::Valid)?,
        })
    };
    let first = record(learner, 0, config.lr_at(1))?;
    let mut best_key = selection_key(first.valid.as_ref().unwrap_or(&first.train));
    let mut best_theta = theta.clone();
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut stop_reason = StopReason::Budget;
    let mut epochs = vec![first];
    let mut step = 0;

    if config.stop_at_zero_error && epochs[0].train.errors == Some(0) {
        stop_reason = StopReason::ZeroError;
    }
    let mut epoch = 0;
    while stop_reason == StopReason::Budget && epoch < config.epochs {
        epoch += 1;
        let lr = config.lr_at(epoch);
        let order: Vec<usize> = if batch_size >= n {
            (0..n).collect()
        } else {
            shuffle_rng.permutation(n)
        };
        for batch in order.chunks(batch_size) {
            step += 1;
            let dropout_seed = Rng::derive_seed(config.seed, stream::DROPOUT, step as u64);
            let (loss, mut grad) = learner.gradient(batch, dropout_seed)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(non_finite(learner, epoch, step, &grad));
            }
            if let Some(c) = config.clip_norm {
                clip_gradient_norm(&mut grad, c);
            }
            sgd_step(&mut theta, &grad, &mut velocity, lr, config.momentum)?;
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(non_finite(learner, epoch, step, &theta));
            }
            learner.set_params(&theta)?;
        }
        let rec = record(learner, epoch, lr)?;
        let key = selection_key(rec.valid.as_ref().unwrap_or(&rec.train));
        if key < best_key {
            best_key = key;
            best_theta.clone_from(&theta);
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
        }
        let zero = rec.train.errors == Some(0);
        epochs.push(rec);
        if config.stop_at_zero_error && zero {
            stop_reason = StopReason::ZeroError;
        } else if config.patience.is_some_and(|p| stale >= p) {
            stop_reason = StopReason::Patience;
        }
    }
    learner.set_params(&best_theta)?;
    Ok(LoopOutcome {
        epochs,
        best_epoch,
        stop_reason,
        initial_orders,
    })
}

fn finish_report(
    learner: &mut dyn Learner,
    outcome: LoopOutcome,
    config: &TrainConfig,
    model: serde_json::Value,
    param_count: usize,
    started: Instant,
) -> Result<TrainReport> {
    let train = learner.metrics(Split::Train)?.expect("training split always present");
    let valid = learner.metrics(Split::Valid)?;
    let test = learner.metrics(Split::Test)?;
    Ok(TrainReport {
        schema: REPORT_SCHEMA.to_string(),
        seed: config.seed,
        config: config.clone(),
        model,
        param_count,
        epochs: outcome.epochs,
        best_epoch: outcome.best_epoch,
        stop_reason: outcome.stop_reason,
        train,
        valid,
        test,
        orders: OrderReport {
            initial: OrderStats::from_orders(&outcome.initial_orders),
            learned: OrderStats::from_orders(&learner.orders()),
            order_learning_rate: config.learning_rate,
        },
        reference_orders: REFERENCE_ORDERS.to_vec(),
        max_abs_state: None,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Trains an already initialised network on explicit splits.
pub fn train_network(
    net: Network,
    train: &LabeledDataset,
    valid: Option<LabeledDataset>,
    test: Option<&LabeledDataset>,
    config: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    config.validate()?;
    let started = Instant::now();
    let model = serde_json::to_value(net.spec())?;
    let param_count = net.param_count();
    let mut learner = NetLearner { net, train, valid, test };
    learner.net.set_mode(Mode::Eval);
    let outcome = run_loop(&mut learner, config)?;
    let report = finish_report(&mut learner, outcome, config, model, param_count, started)?;
    Ok((learner.net, report))
}

/// Builds the network from `spec` (seeded by `config.seed`), holds out
/// `valid_fraction` of `data` for early stopping and trains.
pub fn train(
    spec: &NetworkSpec,
    data: &LabeledDataset,
    test: Option<&LabeledDataset>,
    config: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    config.validate()?;
    let net = Network::new(config.apply_to_network(spec), config.seed)?;
    if config.valid_fraction > 0.0 {
        let (tr, va) = data.split(config.valid_fraction, config.seed)?;
        train_network(net, &tr, Some(va), test, config)
    } else {
        train_network(net, data, None, test, config)
    }
}

/// Recurrent counterpart of [`train`]: losses are per-step negative
/// log-likelihoods and the report records the largest `|h_t|` seen.
pub fn train_rnn(
    spec: &RnnSpec,
    data: &SequenceBatch,
    test: Option<&SequenceBatch>,
    config: &TrainConfig,
) -> Result<(DtRnnParams, TrainReport)> {
    config.validate()?;
    let started = Instant::now();
    let rnn = DtRnnParams::new(config.apply_to_rnn(spec), config.seed)?;
    let model = serde_json::to_value(&rnn.spec)?;
    let param_count = rnn.param_count();
    let (train, valid) = if config.valid_fraction > 0.0 {
        let perm = Rng::substream(config.seed, stream::SPLIT).permutation(data.sequences.len());
        let n_valid = (data.sequences.len() as f64 * config.valid_fraction).round() as usize;
        let pick = |idx: &[usize]| idx.iter().map(|&i| data.sequences[i].clone()).collect::<Vec<_>>();
        (pick(&perm[n_valid..]), Some(pick(&perm[..n_valid])))
    } else {
        (data.sequences.clone(), None)
    };
    let mut learner = RnnLearner {
        rnn,
        train,
        valid,
        test,
        truncation: config.truncation,
        max_abs_state: 0.0,
    };
    let outcome = run_loop(&mut learner, config)?;
    let mut report = finish_report(&mut learner, outcome, config, model, param_count, started)?;
    report.max_abs_state = Some(learner.max_abs_state);
    Ok((learner.rnn, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_gaussian_mixture, gen_periodic_pianoroll, two_gaussians, PeriodicRollSpec};
    use crate::layers::Activation;

    #[test]
    fn plain_step_moves_against_gradient() {
        let mut theta = [1.0];
        let mut v = [0.0];
        sgd_step(&mut theta, &[1.0], &mut v, 0.1, 0.0).unwrap();
        assert!((theta[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_velocity_decays() {
        let mut theta = [0.0];
        let mut v = [1.0];
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            sgd_step(&mut theta, &[0.0], &mut v, 0.1, 0.9).unwrap();
            assert!(v[0].abs() < last);
            last = v[0].abs();
        }
        assert!((theta[0] - 9.0).abs() < 1e-6, "{}", theta[0]);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // Scalar oracle: the same recurrence written out by hand.
        let (mut t, mut v) = (1.0_f64, 0.0_f64);
        let mut theta = [1.0];
        let mut vel = [0.0];
        let mut hit = None;
        for k in 0..500 {
            v = 0.9 * v - 0.1 * t;
            t += v;
            let g = theta[0];
            sgd_step(&mut theta, &[g], &mut vel, 0.1, 0.9).unwrap();
            assert_eq!(theta[0], t);
            if hit.is_none() && theta[0].abs() < 1e-6 {
                hit = Some(k);
            }
        }
        assert!(theta[0].abs() < 1e-6);
        assert!(hit.is_some());
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(sgd_step(&mut [0.0; 2], &[0.0], &mut [0.0; 2], 0.1, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { learning_rate: 0.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { momentum: 1.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { valid_fraction: 1.0, ..ok }.validate().is_err());
    }

    fn gauss_setup() -> (NetworkSpec, LabeledDataset) {
        let data = gen_gaussian_mixture(&two_gaussians(100, 0.5), 7).unwrap();
        let spec = NetworkSpec::lp_classifier(2, 2, 2, OrderInit::Learned { initial_p: 3.0 }, 2);
        (spec, data)
    }

    #[test]
    fn zero_epochs_reports_initial_state() {
        let (spec, data) = gauss_setup();
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let (net, report) = train(&spec, &data, None, &cfg).unwrap();
        assert_eq!(report.epochs.len(), 1);
        assert_eq!(report.best_epoch, 0);
        assert_eq!(net.flatten(), Network::new(spec, 0).unwrap().flatten());
        assert_eq!(report.orders.initial, report.orders.learned);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let (spec, data) = gauss_setup();
        let cfg = TrainConfig { epochs: 5, batch_size: 16, ..Default::default() };
        let a = train(&spec, &data, None, &cfg).unwrap();
        let b = train(&spec, &data, None, &cfg).unwrap();
        assert_eq!(a.0.flatten(), b.0.flatten());
        assert_eq!(serde_json::to_string(&a.1).unwrap(), serde_json::to_string(&b.1).unwrap());
    }

    #[test]
    fn separable_gaussians_reach_zero_training_error() {
        let data = gen_gaussian_mixture(&two_gaussians(200, 0.3), 1).unwrap();
        let spec = NetworkSpec::lp_classifier(2, 2, 2, OrderInit::Learned { initial_p: 3.0 }, 2);
        let cfg = TrainConfig {
            epochs: 300,
            learning_rate: 0.1,
            valid_fraction: 0.0,
            stop_at_zero_error: true,
            ..Default::default()
        };
        let (_, report) = train(&spec, &data, None, &cfg).unwrap();
        assert_eq!(report.train.errors, Some(0), "{:?}", report.stop_reason);
        assert!(report.orders.learned.min.unwrap() > 1.0);
    }

    #[test]
    fn restored_parameters_match_best_validation_error() {
        let (spec, data) = gauss_setup();
        let cfg = TrainConfig { epochs: 30, batch_size: 8, learning_rate: 0.5, ..Default::default() };
        let (_, report) = train(&spec, &data, None, &cfg).unwrap();
        let best = report
            .epochs
            .iter()
            .map(|e| e.valid.as_ref().unwrap().error_rate.unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(report.valid.as_ref().unwrap().error_rate.unwrap(), best);
        assert_eq!(report.epochs[report.best_epoch].valid, report.valid);
    }

    #[test]
    fn patience_stops_early() {
        let (spec, data) = gauss_setup();
        let cfg = TrainConfig { epochs: 500, patience: Some(3), batch_size: 10, ..Default::default() };
        let (_, report) = train(&spec, &data, None, &cfg).unwrap();
        assert_eq!(report.stop_reason, StopReason::Patience);
        assert!(report.epochs.len() < 501);
    }

    #[test]
    fn divergence_names_step_and_block() {
        let (spec, data) = gauss_setup();
        let spec = NetworkSpec {
            input_dim: 2,
            layers: vec![spec.layers[0].clone(), LayerSpec::Dense { out: 2, activation: Activation::Identity }],
        };
        let cfg = TrainConfig { learning_rate: 1e300, epochs: 10, ..Default::default() };
        let err = train(&spec, &data, None, &cfg).unwrap_err();
        match err {
            Error::NonFinite { epoch, step, block } => {
                assert!((1..=10).contains(&epoch));
                assert!(step >= 1);
                assert!(block.starts_with("layer"), "{block}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rnn_training_reduces_nll_and_keeps_states_bounded() {
        let data = gen_periodic_pianoroll(
            &PeriodicRollSpec { sequences: 20, length: 12, motifs: 2, ..Default::default() },
            4,
        )
        .unwrap();
        let spec = RnnSpec {
            input_dim: 8,
            state_dim: 8,
            transition: TransitionSpec::Lp { units: 8, group: 2, order: OrderInit::Learned { initial_p: 2.0 } },
            output_units: 8,
            output_group: 2,
            output_dim: 8,
            dropout: 0.0,
        };
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 15,
            batch_size: 5,
            clip_norm: Some(5.0),
            valid_fraction: 0.0,
            ..Default::default()
        };
        let (_, report) = train_rnn(&spec, &data, None, &cfg).unwrap();
        assert!(report.train.loss < report.epochs[0].train.loss);
        let m = report.max_abs_state.unwrap();
        assert!(m > 0.0 && m < 1.0);
    }
}
