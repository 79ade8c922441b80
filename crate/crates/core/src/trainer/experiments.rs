use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{train_network, TrainConfig};
use crate::datasets::{gen_curvature_dataset, LabeledDataset};
use crate::error::{Error, Result};
use crate::layers::Activation;
use crate::lp::OrderInit;
use crate::network::{LayerSpec, Network, NetworkSpec};

/// Caps the number of worker threads used by multi-seed runs.
pub const THREADS_ENV: &str = "LP_UNITS_THREADS";

pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// One-hidden-layer classifiers compared on the toy tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ToyModel {
    /// Lp units with two filters each.
    Lp { units: usize, order: OrderInit },
    Rectifier { units: usize },
    Sigmoid { units: usize },
    /// Maxout units with two filters each.
    Maxout { units: usize },
}

impl ToyModel {
    pub fn spec(&self, input_dim: usize, classes: usize) -> NetworkSpec {
        let hidden = match *self {
            ToyModel::Lp { units, order } => LayerSpec::Lp { units, group: 2, order },
            ToyModel::Rectifier { units } => LayerSpec::Dense { out: units, activation: Activation::Rectifier },
            ToyModel::Sigmoid { units } => LayerSpec::Dense { out: units, activation: Activation::Sigmoid },
            ToyModel::Maxout { units } => LayerSpec::Maxout { units, group: 2 },
        };
        NetworkSpec {
            input_dim,
            layers: vec![hidden, LayerSpec::Dense { out: classes, activation: Activation::Identity }],
        }
    }

    /// Total number of linear projections in the hidden layer.
    pub fn filters(&self) -> usize {
        match *self {
            ToyModel::Lp { units, .. } | ToyModel::Maxout { units } => 2 * units,
            ToyModel::Rectifier { units } | ToyModel::Sigmoid { units } => units,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ToyModel::Lp { units, order: OrderInit::Learned { .. } } => format!("lp-learned x{units}"),
            ToyModel::Lp { units, order: OrderInit::Fixed { p } } => format!("lp-fixed-{p} x{units}"),
            ToyModel::Rectifier { units } => format!("rectifier x{units}"),
            ToyModel::Sigmoid { units } => format!("sigmoid x{units}"),
            ToyModel::Maxout { units } => format!("maxout x{units}"),
        }
    }
}

/// Full-batch gradient descent with momentum, sweeping the learning rate and
/// keeping the best run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureProtocol {
    pub n: usize,
    pub learning_rates: Vec<f64>,
    pub momentum: f64,
    pub epochs: usize,
}

impl Default for CurvatureProtocol {
    fn default() -> Self {
        Self {
            n: 5000,
            learning_rates: vec![0.3, 0.1, 0.03],
            momentum: 0.9,
            epochs: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub success: bool,
    pub train_errors: usize,
    pub learning_rate: f64,
    pub epochs_run: usize,
    pub initial_orders: Vec<f64>,
    pub learned_orders: Vec<f64>,
}

/// Trains `model` on `gen_curvature_dataset(n, seed)`. Learning rates are
/// tried in order until one reaches zero training errors; otherwise the rate
/// with the fewest errors is reported.
pub fn curvature_trial(model: &ToyModel, protocol: &CurvatureProtocol, seed: u64) -> Result<SeedOutcome> {
    let data = gen_curvature_dataset(protocol.n, seed)?;
    toy_trial(model, protocol, &data, seed)
}

fn toy_trial(model: &ToyModel, protocol: &CurvatureProtocol, data: &LabeledDataset, seed: u64) -> Result<SeedOutcome> {
    if protocol.learning_rates.is_empty() {
        return Err(Error::Argument("at least one learning rate is required".into()));
    }
    let spec = model.spec(data.dim(), data.classes);
    let mut best: Option<SeedOutcome> = None;
    for &lr in &protocol.learning_rates {
        let net = Network::new(spec.clone(), seed)?;
        let initial_orders = net.lp_orders();
        let config = TrainConfig {
            learning_rate: lr,
            momentum: protocol.momentum,
            batch_size: 0,
            epochs: protocol.epochs,
            seed,
            valid_fraction: 0.0,
            stop_at_zero_error: true,
            ..TrainConfig::default()
        };
        let (net, report) = match train_network(net, data, None, None, &config) {
            Ok(r) => r,
            Err(Error::NonFinite { .. }) => continue,
            Err(e) => return Err(e),
        };
        let errors = report.train.errors.unwrap_or(usize::MAX);
        let outcome = SeedOutcome {
            seed,
            success: errors == 0,
            train_errors: errors,
            learning_rate: lr,
            epochs_run: report.epochs.len() - 1,
            initial_orders,
            learned_orders: net.lp_orders(),
        };
        if best.as_ref().is_none_or(|b| errors < b.train_errors) {
            best = Some(outcome);
        }
        if errors == 0 {
            break;
        }
    }
    best.ok_or_else(|| Error::Argument(format!("every learning rate diverged for seed {seed}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeedSummary {
    pub model: String,
    /// Total linear projections, the comparable model-size axis.
    pub filters: usize,
    pub seeds: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub outcomes: Vec<SeedOutcome>,
}

/// Runs `trial` for seeds `base_seed..base_seed + seeds` on up to `threads`
/// workers. Outcomes are merged in seed order, so the summary does not depend
/// on scheduling.
pub fn multi_seed_success_rate(
    model: &ToyModel,
    base_seed: u64,
    seeds: usize,
    threads: usize,
    trial: impl Fn(u64) -> Result<SeedOutcome> + Sync,
) -> Result<MultiSeedSummary> {
    if seeds == 0 {
        return Err(Error::Argument("at least one seed is required".into()));
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<SeedOutcome>>>> = Mutex::new((0..seeds).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, seeds) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= seeds {
                    break;
                }
                let r = trial(base_seed + i as u64);
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    let outcomes = slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every seed ran"))
        .collect::<Result<Vec<_>>>()?;
    let failures = outcomes.iter().filter(|o| !o.success).count();
    Ok(MultiSeedSummary {
        model: model.label(),
        filters: model.filters(),
        seeds,
        failures,
        failure_rate: failures as f64 / seeds as f64,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_gaussian_mixture, two_gaussians};

    fn quick() -> CurvatureProtocol {
        CurvatureProtocol {
            n: 200,
            learning_rates: vec![0.3, 0.1],
            momentum: 0.9,
            epochs: 40,
        }
    }

    #[test]
    fn single_seed_rate_is_binary() {
        let m = ToyModel::Rectifier { units: 2 };
        let s = multi_seed_success_rate(&m, 0, 1, 1, |seed| curvature_trial(&m, &quick(), seed)).unwrap();
        assert!(s.failure_rate == 0.0 || s.failure_rate == 1.0);
        assert_eq!(s.filters, 2);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let m = ToyModel::Lp { units: 2, order: OrderInit::Learned { initial_p: 3.0 } };
        let one = multi_seed_success_rate(&m, 3, 4, 1, |seed| curvature_trial(&m, &quick(), seed)).unwrap();
        let many = multi_seed_success_rate(&m, 3, 4, 3, |seed| curvature_trial(&m, &quick(), seed)).unwrap();
        assert_eq!(one, many);
        assert_eq!(one.outcomes.iter().map(|o| o.seed).collect::<Vec<_>>(), vec![3, 4, 5, 6]);
        assert_eq!(one.filters, 4);
    }

    #[test]
    fn easy_task_succeeds_and_stops_early() {
        let data = gen_gaussian_mixture(&two_gaussians(100, 0.3), 2).unwrap();
        let m = ToyModel::Lp { units: 1, order: OrderInit::Learned { initial_p: 3.0 } };
        let p = CurvatureProtocol { epochs: 500, ..quick() };
        let o = toy_trial(&m, &p, &data, 2).unwrap();
        assert!(o.success, "{o:?}");
        assert!(o.epochs_run < 500);
        assert!(o.learned_orders.iter().all(|&p| p > 1.0));
    }

    #[test]
    fn zero_seeds_rejected() {
        let m = ToyModel::Sigmoid { units: 1 };
        assert!(multi_seed_success_rate(&m, 0, 0, 1, |s| curvature_trial(&m, &quick(), s)).is_err());
    }
}
