use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use serde_json::Value;

use lpunit::datasets::{
    gen_curvature_dataset, gen_gaussian_mixture, gen_periodic_pianoroll, save_pianoroll, three_gaussians,
    two_gaussians, write_csv, PeriodicRollSpec,
};
use lpunit::gradcheck::{grad_check, random_architecture, sample_instance};
use lpunit::layers::Activation;
use lpunit::lp::OrderInit;
use lpunit::network::{Fault, Layer, LayerSpec, Network, NetworkSpec};
use lpunit::rng::{stream, Rng};
use lpunit::tensor::Matrix;
use lpunit::trainer::{
    self, curvature_trial, format_order_table, multi_seed_success_rate, random_search, worker_threads,
    CurvatureProtocol, MultiSeedSummary, OrderReport, OrderStats, TrainReport, ToyModel, REFERENCE_ORDERS,
};
use lpunit::Error;

use crate::config::{parse_config, read_config_value, set_path, RnnFile, TrainFile};
use crate::{CliError, CliResult, DataKind, Mutation};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn write_file(path: &Path, contents: &str) -> CliResult {
    std::fs::write(path, contents).map_err(|e| Error::Io { path: path.to_path_buf(), source: e }.into())
}

fn create_dir(path: &Path) -> CliResult {
    std::fs::create_dir_all(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e }.into())
}

fn to_pretty<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Lib(e.into()))
}

pub fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number `{b}`"))?;
    if !(lo < hi) {
        return Err(format!("range must satisfy lo < hi, got {lo},{hi}"));
    }
    Ok((lo, hi))
}

pub fn gen_data(kind: DataKind, n: Option<usize>, seed: u64, sigma: f64, length: usize, out: &Path) -> CliResult {
    let data = match kind {
        DataKind::Gauss2 => gen_gaussian_mixture(&two_gaussians(n.unwrap_or(500), sigma), seed)?,
        DataKind::Gauss3 => gen_gaussian_mixture(&three_gaussians(n.unwrap_or(400), sigma), seed)?,
        DataKind::Curvature => gen_curvature_dataset(n.unwrap_or(5000), seed)?,
        DataKind::Pianoroll => {
            let spec = PeriodicRollSpec { sequences: n.unwrap_or(200), length, ..Default::default() };
            let batch = gen_periodic_pianoroll(&spec, seed)?;
            save_pianoroll(&batch, out)?;
            println!("wrote {} sequences of length {length} to {}", batch.sequences.len(), out.display());
            return Ok(());
        }
    };
    write_csv(&data, out)?;
    println!("wrote {} points ({} classes) to {}", data.len(), data.classes, out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON document with `data`, `model`, `train` and optional `test`/`search`.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "run")]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

fn apply_overrides(
    value: &mut Value,
    epochs: Option<usize>,
    seed: Option<u64>,
    lr: Option<f64>,
    momentum: Option<f64>,
    batch_size: Option<usize>,
) -> CliResult {
    let pairs = [
        ("train.epochs", epochs.map(Value::from)),
        ("train.seed", seed.map(Value::from)),
        ("train.learning_rate", lr.map(Value::from)),
        ("train.momentum", momentum.map(Value::from)),
        ("train.batch_size", batch_size.map(Value::from)),
    ];
    for (path, v) in pairs {
        if let Some(v) = v {
            set_path(value, path, v)?;
        }
    }
    Ok(())
}

fn from_value<T: serde::de::DeserializeOwned>(value: &Value, origin: &Path) -> CliResult<T> {
    parse_config(&value.to_string(), origin)
}

fn run_train_file(file: &TrainFile) -> CliResult<(Network, TrainReport)> {
    let (data, bundled_test) = file.data.load()?;
    let test = match &file.test {
        Some(src) => Some(src.load()?.0),
        None => bundled_test,
    };
    Ok(trainer::train(&file.model, &data, test.as_ref(), &file.train)?)
}

fn selection_score(report: &TrainReport) -> f64 {
    let m = report.valid.as_ref().unwrap_or(&report.train);
    m.error_rate.unwrap_or(m.loss)
}

fn describe(label: &str, m: Option<&trainer::Metrics>) -> String {
    match m {
        Some(m) => match m.error_rate {
            Some(e) => format!("{label}: loss {:.6} error {:.4}%", m.loss, 100.0 * e),
            None => format!("{label}: loss {:.6}", m.loss),
        },
        None => format!("{label}: n/a"),
    }
}

pub fn train(args: &TrainArgs) -> CliResult {
    let mut value = read_config_value(&args.config)?;
    apply_overrides(&mut value, args.epochs, args.seed, args.lr, args.momentum, args.batch_size)?;
    let file: TrainFile = from_value(&value, &args.config)?;
    create_dir(&args.out)?;

    let (resolved, net, report) = match &file.search {
        None => {
            let (net, report) = run_train_file(&file)?;
            (file.clone(), net, report)
        }
        Some(search) => {
            let outcome = random_search(&search.space, search.budget, search.base_seed, |assignment, seed| {
                let run = || -> CliResult<_> {
                    let mut trial = value.clone();
                    set_path(&mut trial, "train.seed", Value::from(seed))?;
                    for (k, v) in assignment {
                        set_path(&mut trial, k, v.clone())?;
                    }
                    let mut trial_file: TrainFile = from_value(&trial, &args.config)?;
                    trial_file.search = None;
                    let (net, report) = run_train_file(&trial_file)?;
                    Ok((selection_score(&report), (trial_file, net, report)))
                };
                run().map_err(|e| match e {
                    CliError::Lib(e) => e,
                    other => Error::Argument(other.to_string()),
                })
            })?;
            write_file(&args.out.join("leaderboard.json"), &to_pretty(&outcome.leaderboard)?)?;
            println!("search: {} trials, leaderboard in {}", outcome.leaderboard.len(), args.out.join("leaderboard.json").display());
            match outcome.best {
                Some(best) => best,
                None => {
                    println!("search budget 0: nothing trained");
                    return Ok(());
                }
            }
        }
    };

    write_file(&args.out.join("config.json"), &to_pretty(&resolved)?)?;
    write_file(&args.out.join("report.json"), &to_pretty(&report)?)?;
    write_file(&args.out.join("model.json"), &net.to_json()?)?;
    println!("{}", to_pretty(&resolved)?);
    println!("epochs run: {} (best epoch {}, stop: {:?})", report.epochs.len() - 1, report.best_epoch, report.stop_reason);
    println!("{}", describe("train", Some(&report.train)));
    println!("{}", describe("valid", report.valid.as_ref()));
    println!("{}", describe("test", report.test.as_ref()));
    eprintln!("wall time {:.2}s", report.wall_time_secs);
    println!("wrote report.json, model.json, config.json to {}", args.out.display());
    Ok(())
}

fn lp_stack(layers: usize) -> NetworkSpec {
    let mut spec = NetworkSpec { input_dim: 2, layers: Vec::new() };
    for _ in 0..layers {
        spec.layers.push(LayerSpec::Lp { units: 2, group: 2, order: OrderInit::Learned { initial_p: 3.0 } });
    }
    if layers > 0 {
        spec.layers.push(LayerSpec::Dense { out: 2, activation: Activation::Identity });
    }
    spec
}

pub fn gradcheck(
    layers: usize,
    random: Option<usize>,
    seed: u64,
    batch: usize,
    eps: f64,
    mutate: Option<Mutation>,
) -> CliResult {
    let specs: Vec<NetworkSpec> = match random {
        Some(count) => {
            let mut rng = Rng::substream(seed, stream::GRADCHECK);
            (0..count).map(|_| random_architecture(&mut rng)).collect()
        }
        None => vec![lp_stack(layers)],
    };
    let mut worst = 0.0_f64;
    for (i, spec) in specs.iter().enumerate() {
        let mut inst = sample_instance(spec, seed.wrapping_add(i as u64), batch)?;
        if mutate == Some(Mutation::RhoGrad) {
            inst.net.set_fault(Some(Fault::DoubleOrderGradient));
        }
        let r = grad_check(&inst.net, &inst.x, &inst.labels, eps)?;
        if specs.len() > 1 {
            println!("architecture {i}: {} parameters, max_rel_error {:.3e}", inst.net.param_count(), r.max_rel_error);
        }
        worst = worst.max(r.max_rel_error);
    }
    if worst == 0.0 {
        println!("max_rel_error 0");
    } else {
        println!("max_rel_error {worst:.3e}");
    }
    if worst < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::Check(format!("max relative error {worst:e} >= {GRADCHECK_TOLERANCE:e}")))
    }
}

fn grid(n: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn boundary(model: &Path, nx: usize, ny: usize, xr: (f64, f64), yr: (f64, f64), out: &Path) -> CliResult {
    if nx == 0 || ny == 0 {
        return Err(CliError::Usage("grid sizes must be >= 1".into()));
    }
    let text = std::fs::read_to_string(model).map_err(|e| Error::Io { path: model.to_path_buf(), source: e })?;
    let net = Network::from_json(&text)?;
    if net.input_dim() != 2 {
        return Err(CliError::Usage(format!("boundary needs a 2D model, this one takes {} inputs", net.input_dim())));
    }
    let (xs, ys) = (grid(nx, xr), grid(ny, yr));
    let points: Vec<f64> = ys.iter().flat_map(|&y| xs.iter().flat_map(move |&x| [x, y])).collect();
    let x = Matrix::new(nx * ny, 2, points)?;
    let labels = net.predict_labels(&x)?;
    let hidden = net.layers().iter().position(|l| !matches!(l, Layer::Dropout { .. }));
    let units = match hidden {
        Some(i) if i + 1 < net.layers().len() => Some(net.layer_output(&x, i)?),
        _ => None,
    };
    let k = units.as_ref().map_or(0, Matrix::cols);
    let mut csv = String::from("x,y,predicted_label");
    for j in 0..k {
        let _ = write!(csv, ",u_{j}");
    }
    csv.push('\n');
    for (r, (row, label)) in x.iter_rows().zip(&labels).enumerate() {
        let _ = write!(csv, "{:.16e},{:.16e},{label}", row[0], row[1]);
        if let Some(u) = &units {
            for v in u.row(r) {
                let _ = write!(csv, ",{v:.16e}");
            }
        }
        csv.push('\n');
    }
    write_file(out, &csv)?;
    println!("wrote {} grid points with {k} unit columns to {}", labels.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct OrdersDocument<'a> {
    initial: &'a OrderStats,
    learned: &'a OrderStats,
    order_learning_rate: f64,
    reference: &'a [trainer::ReferenceOrders],
}

pub fn orders(report: &Path, json: Option<&Path>) -> CliResult {
    let text = std::fs::read_to_string(report).map_err(|e| Error::Io { path: report.to_path_buf(), source: e })?;
    let report: TrainReport = parse_config(&text, report)?;
    print!("{}", format_order_table(&report.orders));
    if let Some(path) = json {
        let doc = OrdersDocument {
            initial: &report.orders.initial,
            learned: &report.orders.learned,
            order_learning_rate: report.orders.order_learning_rate,
            reference: &REFERENCE_ORDERS,
        };
        write_file(path, &to_pretty(&doc)?)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct MultiSeedArgs {
    /// Comma-separated `kind:units` entries; kinds: lp (learned order), l2
    /// (fixed p = 2), rectifier, sigmoid, maxout.
    #[arg(long, value_delimiter = ',', default_value = "lp:3,l2:2,lp:2,rectifier:4")]
    models: Vec<String>,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 5000)]
    epochs: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.1,0.03")]
    lrs: Vec<f64>,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    /// Initial order of learned-order units.
    #[arg(long, default_value_t = 3.0)]
    initial_p: f64,
    #[arg(long)]
    out: PathBuf,
}

pub fn parse_toy_model(s: &str, initial_p: f64) -> CliResult<ToyModel> {
    let (kind, units) = s
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("model `{s}` is not of the form kind:units")))?;
    let units: usize = units
        .parse()
        .ok()
        .filter(|&u| u >= 1)
        .ok_or_else(|| CliError::Usage(format!("bad unit count in `{s}`")))?;
    Ok(match kind {
        "lp" => ToyModel::Lp { units, order: OrderInit::Learned { initial_p } },
        "l2" => ToyModel::Lp { units, order: OrderInit::Fixed { p: 2.0 } },
        "rectifier" => ToyModel::Rectifier { units },
        "sigmoid" => ToyModel::Sigmoid { units },
        "maxout" => ToyModel::Maxout { units },
        other => return Err(CliError::Usage(format!("unknown model kind `{other}`"))),
    })
}

#[derive(Serialize)]
struct Curve {
    #[serde(flatten)]
    summary: MultiSeedSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    orders: Option<OrderReport>,
}

#[derive(Serialize)]
struct MultiSeedDocument {
    schema: &'static str,
    dataset: &'static str,
    /// The x-axis of the failure curve counts linear projections.
    size_axis: &'static str,
    protocol: CurvatureProtocol,
    curves: Vec<Curve>,
}

pub fn multi_seed(args: &MultiSeedArgs) -> CliResult {
    let models = args
        .models
        .iter()
        .map(|m| parse_toy_model(m, args.initial_p))
        .collect::<CliResult<Vec<_>>>()?;
    let protocol = CurvatureProtocol {
        n: args.n,
        learning_rates: args.lrs.clone(),
        momentum: args.momentum,
        epochs: args.epochs,
    };
    let threads = worker_threads();
    let mut curves = Vec::new();
    println!("{:<20} {:>7} {:>9} {:>12}", "model", "filters", "failures", "failure rate");
    for model in &models {
        let summary =
            multi_seed_success_rate(model, args.base_seed, args.seeds, threads, |s| curvature_trial(model, &protocol, s))?;
        println!(
            "{:<20} {:>7} {:>6}/{:<2} {:>12.2}",
            summary.model, summary.filters, summary.failures, summary.seeds, summary.failure_rate
        );
        let orders = matches!(model, ToyModel::Lp { order: OrderInit::Learned { .. }, .. }).then(|| {
            let pool = |f: fn(&trainer::SeedOutcome) -> &Vec<f64>| {
                summary.outcomes.iter().flat_map(|o| f(o).iter().copied()).collect::<Vec<_>>()
            };
            OrderReport {
                initial: OrderStats::from_orders(&pool(|o| &o.initial_orders)),
                learned: OrderStats::from_orders(&pool(|o| &o.learned_orders)),
                order_learning_rate: f64::NAN,
            }
        });
        curves.push(Curve { summary, orders });
    }
    for c in &mut curves {
        if let Some(o) = &mut c.orders {
            // Learning rates differ per seed; report the first of the sweep.
            o.order_learning_rate = protocol.learning_rates.first().copied().unwrap_or(0.0);
        }
    }
    let doc = MultiSeedDocument {
        schema: "lpunit.multi-seed/v1",
        dataset: "curvature",
        size_axis: "filters (total linear projections)",
        protocol,
        curves,
    };
    write_file(&args.out, &to_pretty(&doc)?)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct RnnTrainArgs {
    /// JSON document with `data`, `model`, `train` and optional `test_fraction`.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "rnn-run")]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
}

pub fn rnn_train(args: &RnnTrainArgs) -> CliResult {
    let mut value = read_config_value(&args.config)?;
    apply_overrides(&mut value, args.epochs, args.seed, args.lr, None, None)?;
    let file: RnnFile = from_value(&value, &args.config)?;
    if !(0.0..1.0).contains(&file.test_fraction) {
        return Err(CliError::Usage(format!("test_fraction must be in [0, 1), got {}", file.test_fraction)));
    }
    let data = file.data.load()?;
    let (train_set, test_set) = data.split_tail(file.test_fraction);
    let test = (!test_set.sequences.is_empty()).then_some(&test_set);
    let (rnn, report) = trainer::train_rnn(&file.model, &train_set, test, &file.train)?;
    create_dir(&args.out)?;
    write_file(&args.out.join("config.json"), &to_pretty(&file)?)?;
    write_file(&args.out.join("report.json"), &to_pretty(&report)?)?;
    write_file(&args.out.join("model.json"), &rnn.to_json()?)?;
    println!("{}", to_pretty(&file)?);
    println!("per-step negative log-likelihood (nats)");
    println!("{}", describe("train", Some(&report.train)));
    println!("{}", describe("valid", report.valid.as_ref()));
    println!("{}", describe("test", report.test.as_ref()));
    println!("uniform baseline: {:.6}", data.dim as f64 * std::f64::consts::LN_2);
    println!("max |h_t|: {:.17}", report.max_abs_state.unwrap_or(0.0));
    eprintln!("wall time {:.2}s", report.wall_time_secs);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_parse() {
        assert_eq!(parse_range("-3,3").unwrap(), (-3.0, 3.0));
        assert!(parse_range("3,-3").is_err());
        assert!(parse_range("1").is_err());
    }

    #[test]
    fn toy_model_strings() {
        assert_eq!(parse_toy_model("rectifier:4", 3.0).unwrap(), ToyModel::Rectifier { units: 4 });
        assert_eq!(
            parse_toy_model("l2:2", 3.0).unwrap(),
            ToyModel::Lp { units: 2, order: OrderInit::Fixed { p: 2.0 } }
        );
        assert!(parse_toy_model("tanh:2", 3.0).is_err());
        assert!(parse_toy_model("lp:0", 3.0).is_err());
    }

    #[test]
    fn grid_endpoints() {
        assert_eq!(grid(3, (-1.0, 1.0)), vec![-1.0, 0.0, 1.0]);
        assert_eq!(grid(1, (-1.0, 1.0)), vec![-1.0]);
    }
}
