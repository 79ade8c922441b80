//! The learned-order Lp pooling unit.
//!
//! A unit pools `N` filter responses `a_i = w_iᵀx` into
//!
//! ```text
//! u = ( (1/N) Σ |a_i - c_i|^p )^(1/p),    p = 1 + softplus(ρ)
//! ```
//!
//! so that `p > 1` for every finite `ρ`. Evaluation factors out
//! `m = max |a_i - c_i|`, keeping every ratio `r_i = |a_i - c_i| / m` in
//! `[0, 1]`: large orders then underflow to zero instead of overflowing.
//!
//! Gradient conventions at the non-differentiable points: `|d|' = 0` at
//! `d = 0`, and all partials vanish when `u = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{self, Matrix};

/// Half-width of the uniform noise added to the initial `ρ` of each unit.
pub const ORDER_INIT_NOISE: f64 = 0.1;

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `p = 1 + log(1 + e^ρ)`.
#[inline]
pub fn reparam_p(rho: f64) -> f64 {
    1.0 + softplus(rho)
}

/// Inverse of [`reparam_p`]: `ρ = log(e^(p-1) - 1)`.
pub fn inverse_reparam(p: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("order must be finite and > 1, got {p}")));
    }
    let y = p - 1.0;
    // log(e^y - 1) = y + log(1 - e^-y); expm1 keeps small y accurate.
    Ok(y + (-(-y).exp_m1()).ln())
}

/// Normalized Lp norm of the deviations `d`, for an explicit order `p >= 1`.
pub fn lp_norm(d: &[f64], p: f64) -> f64 {
    let n = d.len();
    if n == 0 {
        return 0.0;
    }
    let m = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    let inv_n = 1.0 / n as f64;
    if p == 1.0 {
        return d.iter().map(|v| v.abs()).sum::<f64>() * inv_n;
    }
    if p == 2.0 {
        let s: f64 = d.iter().map(|v| (v / m) * (v / m)).sum();
        return m * (s * inv_n).sqrt();
    }
    let s: f64 = d.iter().map(|v| (v.abs() / m).powf(p)).sum();
    m * (s * inv_n).powf(1.0 / p)
}

/// Writes `upstream · ∂u/∂d_i` into `d_out` and returns `upstream · ∂u/∂p`.
pub fn lp_norm_backward(d: &[f64], p: f64, upstream: f64, d_out: &mut [f64]) -> f64 {
    norm_backward(d, p, upstream, d_out, true)
}

fn norm_backward(d: &[f64], p: f64, upstream: f64, d_out: &mut [f64], want_dp: bool) -> f64 {
    debug_assert_eq!(d.len(), d_out.len());
    let n = d.len();
    let m = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if m == 0.0 || upstream == 0.0 {
        d_out.iter_mut().for_each(|g| *g = 0.0);
        return 0.0;
    }
    let inv_n = 1.0 / n as f64;

    // d_out temporarily holds r_i^p. Σ r^p ln r skips zero ratios (r^p ln r -> 0).
    let mut sum_pow = 0.0;
    let mut sum_pow_log = 0.0;
    for (slot, &v) in d_out.iter_mut().zip(d) {
        let r = v.abs() / m;
        let rp = if p == 2.0 { r * r } else if r == 0.0 { 0.0 } else { r.powf(p) };
        *slot = rp;
        sum_pow += rp;
        if want_dp && r != 0.0 {
            sum_pow_log += rp * r.ln();
        }
    }
    let s = sum_pow * inv_n;
    let root = if p == 2.0 { s.sqrt() } else { s.powf(1.0 / p) };
    let u = m * root;

    // ∂u/∂d_i = (1/N) (r_i / root)^(p-1) sign(d_i) = (1/N) r_i^p root / (r_i s) sign(d_i).
    let scale = upstream * inv_n * root / s;
    for (g, &v) in d_out.iter_mut().zip(d) {
        *g = if v == 0.0 { 0.0 } else { scale * *g * m / v };
    }
    if !want_dp {
        return 0.0;
    }

    // ln u = ln m + ln(s)/p  ⇒  ∂u/∂p = u (−ln s / p² + Σ r^p ln r / (p Σ r^p)).
    let d_p = u * (-s.ln() / (p * p) + sum_pow_log / (p * sum_pow));
    upstream * d_p
}

/// A single unit's output for signals `a`, centers `c`, order parameter `rho`.
pub fn lp_forward(a: &[f64], c: &[f64], rho: f64) -> f64 {
    assert_eq!(a.len(), c.len(), "signals and centers differ in length");
    let d: Vec<f64> = a.iter().zip(c).map(|(a, c)| a - c).collect();
    lp_norm(&d, reparam_p(rho))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpPartials {
    pub d_a: Vec<f64>,
    pub d_c: Vec<f64>,
    pub d_rho: f64,
}

pub fn lp_backward(a: &[f64], c: &[f64], rho: f64, upstream: f64) -> LpPartials {
    assert_eq!(a.len(), c.len(), "signals and centers differ in length");
    let d: Vec<f64> = a.iter().zip(c).map(|(a, c)| a - c).collect();
    let mut d_a = vec![0.0; d.len()];
    let d_p = lp_norm_backward(&d, reparam_p(rho), upstream, &mut d_a);
    let d_c = d_a.iter().map(|g| -g).collect();
    LpPartials {
        d_a,
        d_c,
        d_rho: d_p * sigmoid(rho),
    }
}

/// How a layer's orders are parameterized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    /// One learned `ρ` per unit.
    Learned { rho: Vec<f64> },
    /// A single fixed order shared by all units; not a trainable parameter.
    Fixed { p: f64 },
}

/// Layer of `units` Lp units, each pooling its own `group` filters.
///
/// Column `j·N + k` of `weights` is the `k`-th filter of unit `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpLayerParams {
    pub weights: Matrix,
    pub centers: Vec<f64>,
    pub order: Order,
    pub group: usize,
}

#[derive(Debug, Clone)]
pub struct LpCache {
    input: Matrix,
    signals: Matrix,
}

impl LpCache {
    pub fn signals(&self) -> &Matrix {
        &self.signals
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpGradients {
    pub d_signals: Matrix,
    pub d_weights: Matrix,
    pub d_centers: Vec<f64>,
    /// Empty for a fixed-order layer.
    pub d_rho: Vec<f64>,
}

impl LpLayerParams {
    pub fn new(weights: Matrix, centers: Vec<f64>, order: Order, group: usize) -> Result<Self> {
        if group == 0 {
            return Err(Error::Argument("Lp group size must be >= 1".into()));
        }
        if !weights.cols().is_multiple_of(group) || centers.len() != weights.cols() {
            return Err(Error::shape(
                "LpLayerParams::new",
                format!("weights {} with group {group}", weights.shape_str()),
                format!("{} centers", centers.len()),
            ));
        }
        let units = weights.cols() / group;
        match &order {
            Order::Learned { rho } if rho.len() != units => {
                return Err(Error::shape(
                    "LpLayerParams::new",
                    format!("{units} units"),
                    format!("{} order parameters", rho.len()),
                ))
            }
            Order::Fixed { p } if !(*p >= 1.0) => {
                return Err(Error::Domain(format!("fixed order must be >= 1, got {p}")))
            }
            _ => {}
        }
        Ok(Self {
            weights,
            centers,
            order,
            group,
        })
    }

    /// Glorot-uniform filters, zero centers; learned orders start at
    /// `initial_p` plus uniform noise in `ρ`.
    pub fn init(
        input_dim: usize,
        units: usize,
        group: usize,
        order: OrderInit,
        rng: &mut Rng,
    ) -> Result<Self> {
        let filters = units * group;
        let limit = (6.0 / (input_dim + filters).max(1) as f64).sqrt();
        let w = rng.uniform_vec(-limit, limit, input_dim * filters)?;
        let order = match order {
            OrderInit::Learned { initial_p } => {
                let base = inverse_reparam(initial_p)?;
                let rho = (0..units)
                    .map(|_| base + rng.range(-ORDER_INIT_NOISE, ORDER_INIT_NOISE))
                    .collect();
                Order::Learned { rho }
            }
            OrderInit::Fixed { p } => Order::Fixed { p },
        };
        Self::new(
            Matrix::new(input_dim, filters, w)?,
            vec![0.0; filters],
            order,
            group,
        )
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn units(&self) -> usize {
        self.weights.cols() / self.group
    }

    pub fn order_of(&self, unit: usize) -> f64 {
        match &self.order {
            Order::Learned { rho } => reparam_p(rho[unit]),
            Order::Fixed { p } => *p,
        }
    }

    pub fn orders(&self) -> Vec<f64> {
        (0..self.units()).map(|j| self.order_of(j)).collect()
    }

    pub fn learns_order(&self) -> bool {
        matches!(self.order, Order::Learned { .. })
    }

    pub fn param_count(&self) -> usize {
        let rho = match &self.order {
            Order::Learned { rho } => rho.len(),
            Order::Fixed { .. } => 0,
        };
        self.weights.as_slice().len() + self.centers.len() + rho
    }

    /// Batched forward: `x` is `batch × input_dim`, the result `batch × units`.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, LpCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "lp_layer_forward",
                x.shape_str(),
                format!("weights {}", self.weights.shape_str()),
            ));
        }
        let signals = tensor::matmul(x, &self.weights)?;
        let units = self.units();
        let mut out = Matrix::zeros(x.rows(), units);
        let orders = self.orders();
        let mut d = vec![0.0; self.group];
        for b in 0..x.rows() {
            let row = signals.row(b);
            for (j, &p) in orders.iter().enumerate() {
                let span = j * self.group..(j + 1) * self.group;
                for ((di, a), c) in d.iter_mut().zip(&row[span.clone()]).zip(&self.centers[span]) {
                    *di = a - c;
                }
                out.set(b, j, lp_norm(&d, p));
            }
        }
        Ok((
            out,
            LpCache {
                input: x.clone(),
                signals,
            },
        ))
    }

    pub fn backward(&self, upstream: &Matrix, cache: &LpCache) -> Result<(Matrix, LpGradients)> {
        let units = self.units();
        if cache.input.cols() != self.input_dim()
            || cache.signals.cols() != self.weights.cols()
            || cache.signals.rows() != cache.input.rows()
        {
            return Err(Error::Usage(format!(
                "Lp cache (input {}, signals {}) does not belong to a layer with weights {}",
                cache.input.shape_str(),
                cache.signals.shape_str(),
                self.weights.shape_str()
            )));
        }
        if upstream.rows() != cache.input.rows() || upstream.cols() != units {
            return Err(Error::Usage(format!(
                "upstream {} does not match cached batch of {} rows and {units} units",
                upstream.shape_str(),
                cache.input.rows()
            )));
        }

        let mut d_signals = Matrix::zeros(cache.signals.rows(), cache.signals.cols());
        let mut d_rho = vec![0.0; if self.learns_order() { units } else { 0 }];
        let orders = self.orders();
        let learned = self.learns_order();
        let mut d_p = vec![0.0; units];
        let mut d = vec![0.0; self.group];
        for b in 0..upstream.rows() {
            let row = cache.signals.row(b);
            for (j, &p) in orders.iter().enumerate() {
                let g = upstream.get(b, j);
                let span = j * self.group..(j + 1) * self.group;
                for ((di, a), c) in d.iter_mut().zip(&row[span.clone()]).zip(&self.centers[span.clone()]) {
                    *di = a - c;
                }
                d_p[j] += norm_backward(&d, p, g, &mut d_signals.row_mut(b)[span], learned);
            }
        }
        if let Order::Learned { rho } = &self.order {
            for ((dr, dp), r) in d_rho.iter_mut().zip(&d_p).zip(rho) {
                *dr = dp * sigmoid(*r);
            }
        }

        let d_centers = d_signals.column_sums().into_iter().map(|v| -v).collect();
        let d_weights = tensor::matmul_tn(&cache.input, &d_signals)?;
        let d_input = tensor::matmul_nt(&d_signals, &self.weights)?;
        Ok((
            d_input,
            LpGradients {
                d_signals,
                d_weights,
                d_centers,
                d_rho,
            },
        ))
    }

    /// Smallest `|a_i - c_i|` seen in the cached batch; distance to the kink.
    pub fn min_deviation(&self, cache: &LpCache) -> f64 {
        let mut min = f64::INFINITY;
        for row in cache.signals.iter_rows() {
            for (a, c) in row.iter().zip(&self.centers) {
                min = min.min((a - c).abs());
            }
        }
        min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderInit {
    Learned { initial_p: f64 },
    Fixed { p: f64 },
}
