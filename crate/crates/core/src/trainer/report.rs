use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::TrainConfig;

pub const REPORT_SCHEMA: &str = "lpunit.train-report/v1";

/// Width of the order histogram bins; bins are centred on multiples of it.
pub const ORDER_BIN_WIDTH: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceOrders {
    pub dataset: &'static str,
    pub mean: f64,
    pub std: f64,
}

/// Published mean ± std of learned orders, kept for side-by-side reading.
pub const REFERENCE_ORDERS: [ReferenceOrders; 3] = [
    ReferenceOrders { dataset: "MNIST", mean: 3.44, std: 0.38 },
    ReferenceOrders { dataset: "TFD", mean: 2.04, std: 0.22 },
    ReferenceOrders { dataset: "Pentomino", mean: 5.81, std: 1.56 },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub errors: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train: Metrics,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub valid: Option<Metrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    Patience,
    ZeroError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub center: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStats {
    pub count: usize,
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub bin_width: f64,
    /// Contiguous bins from the lowest to the highest occupied one.
    pub histogram: Vec<HistogramBin>,
}

impl OrderStats {
    pub fn from_orders(orders: &[f64]) -> Self {
        let count = orders.len();
        if count == 0 {
            return Self {
                count,
                mean: None,
                std: None,
                min: None,
                max: None,
                bin_width: ORDER_BIN_WIDTH,
                histogram: Vec::new(),
            };
        }
        let n = count as f64;
        let mean = orders.iter().sum::<f64>() / n;
        let var = orders.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        let min = orders.iter().copied().fold(f64::INFINITY, f64::min);
        let max = orders.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bin = |p: f64| (p / ORDER_BIN_WIDTH).round() as i64;
        let (lo, hi) = (bin(min), bin(max));
        let mut counts = vec![0usize; (hi - lo + 1) as usize];
        for &p in orders {
            counts[(bin(p) - lo) as usize] += 1;
        }
        let histogram = counts
            .into_iter()
            .enumerate()
            .map(|(k, count)| HistogramBin {
                center: (lo + k as i64) as f64 * ORDER_BIN_WIDTH,
                count,
            })
            .collect();
        Self {
            count,
            mean: Some(mean),
            std: Some(var.sqrt()),
            min: Some(min),
            max: Some(max),
            bin_width: ORDER_BIN_WIDTH,
            histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub initial: OrderStats,
    pub learned: OrderStats,
    /// Orders share the single learning rate of all other parameters.
    pub order_learning_rate: f64,
}

/// Serialized training outcome. Wall time is kept out of the JSON so that
/// reruns produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub model: serde_json::Value,
    pub param_count: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    pub train: Metrics,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub valid: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test: Option<Metrics>,
    pub orders: OrderReport,
    #[serde(skip_deserializing, default = "reference_default")]
    pub reference_orders: Vec<ReferenceOrders>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_abs_state: Option<f64>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

fn reference_default() -> Vec<ReferenceOrders> {
    REFERENCE_ORDERS.to_vec()
}

fn mean_std(s: &OrderStats) -> String {
    match (s.mean, s.std) {
        (Some(m), Some(d)) => format!("{m:.2} ± {d:.2}"),
        _ => "n/a".to_string(),
    }
}

/// Mean ± std block for initial, learned and reference orders, followed by
/// both histograms.
pub fn format_order_table(orders: &OrderReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:>6}  mean ± std", "orders", "units");
    let _ = writeln!(out, "{:<16} {:>6}  {}", "initial", orders.initial.count, mean_std(&orders.initial));
    let _ = writeln!(out, "{:<16} {:>6}  {}", "learned", orders.learned.count, mean_std(&orders.learned));
    for r in REFERENCE_ORDERS {
        let _ = writeln!(out, "{:<16} {:>6}  {:.2} ± {:.2}", format!("ref. {}", r.dataset), "-", r.mean, r.std);
    }
    for (name, stats) in [("initial", &orders.initial), ("learned", &orders.learned)] {
        let _ = writeln!(out, "\n{name} histogram (bin width {})", stats.bin_width);
        for b in &stats.histogram {
            let _ = writeln!(out, "{:>7.2} {:>5} {}", b.center, b.count, "#".repeat(b.count.min(60)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn orders_near_three_fill_one_bin() {
        let s = OrderStats::from_orders(&[2.95, 3.0, 3.08, 2.91]);
        assert_eq!(s.histogram, vec![HistogramBin { center: 3.0, count: 4 }]);
    }

    #[test]
    fn empty_orders() {
        let s = OrderStats::from_orders(&[]);
        assert_eq!(s.count, 0);
        assert!(s.histogram.is_empty() && s.mean.is_none());
    }

    #[test]
    fn table_contains_reference_rows() {
        let r = OrderReport {
            initial: OrderStats::from_orders(&[3.0]),
            learned: OrderStats::from_orders(&[2.0, 2.5]),
            order_learning_rate: 0.1,
        };
        let t = format_order_table(&r);
        assert!(t.contains("2.04 ± 0.22"));
        assert!(t.contains("2.25 ± 0.25"));
    }

    proptest! {
        #[test]
        fn histogram_consistent(orders in proptest::collection::vec(1.0f64..12.0, 1..40)) {
            let s = OrderStats::from_orders(&orders);
            prop_assert_eq!(s.histogram.iter().map(|b| b.count).sum::<usize>(), orders.len());
            let n = orders.len() as f64;
            let binned_mean = s.histogram.iter().map(|b| b.center * b.count as f64).sum::<f64>() / n;
            prop_assert!((binned_mean - s.mean.unwrap()).abs() <= ORDER_BIN_WIDTH / 2.0 + 1e-12);
            let binned_var = s.histogram.iter().map(|b| (b.center - binned_mean).powi(2) * b.count as f64).sum::<f64>() / n;
            prop_assert!((binned_var.sqrt() - s.std.unwrap()).abs() <= ORDER_BIN_WIDTH / 2.0 + 1e-12);
        }
    }
}
