use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::tensor::Matrix;

/// One isotropic 2D Gaussian component with its class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: [f64; 2],
    pub sigma: f64,
    pub label: usize,
    pub count: usize,
}

/// Two classes centred at (−1.5, 0) and (1.5, 0).
pub fn two_gaussians(per_class: usize, sigma: f64) -> Vec<MixtureComponent> {
    [-1.5, 1.5]
        .iter()
        .enumerate()
        .map(|(label, &mx)| MixtureComponent {
            mean: [mx, 0.0],
            sigma,
            label,
            count: per_class,
        })
        .collect()
}

/// Three classes at 90°, 210° and 330° on a circle of radius 2.
pub fn three_gaussians(per_class: usize, sigma: f64) -> Vec<MixtureComponent> {
    [90.0_f64, 210.0, 330.0]
        .iter()
        .enumerate()
        .map(|(label, deg)| {
            let t = deg.to_radians();
            MixtureComponent {
                mean: [2.0 * t.cos(), 2.0 * t.sin()],
                sigma,
                label,
                count: per_class,
            }
        })
        .collect()
}

/// Samples every component (Box–Muller normals) and shuffles the result.
pub fn gen_gaussian_mixture(components: &[MixtureComponent], seed: u64) -> Result<LabeledDataset> {
    for c in components {
        if !(c.sigma > 0.0) || !c.sigma.is_finite() {
            return Err(Error::Argument(format!("component sigma must be > 0, got {}", c.sigma)));
        }
        if c.count == 0 {
            return Err(Error::Argument("component count must be >= 1".into()));
        }
    }
    let classes = components.iter().map(|c| c.label + 1).max().unwrap_or(0);
    let mut rng = Rng::substream(seed, stream::DATA);
    let mut points = Vec::new();
    for c in components {
        for _ in 0..c.count {
            let x = c.mean[0] + c.sigma * rng.normal();
            let y = c.mean[1] + c.sigma * rng.normal();
            points.push((x, y, c.label));
        }
    }
    Rng::substream(seed, stream::SHUFFLE).shuffle(&mut points);
    let data = points.iter().flat_map(|&(x, y, _)| [x, y]).collect();
    let labels = points.iter().map(|p| p.2).collect();
    LabeledDataset::new(Matrix::new(points.len(), 2, data)?, labels, classes)
}

/// Sampling box `[x_lo, x_hi] × [y_lo, y_hi]` of the curvature task.
pub const CURVATURE_BOX: [f64; 4] = [-2.0, 3.0, -2.0, 2.0];

/// Area of the positive region over the box area: (π/2 + 4) / 20.
pub const CURVATURE_POSITIVE_FRACTION: f64 = (std::f64::consts::FRAC_PI_2 + 4.0) / 20.0;

/// Positive region: a unit half-disc on the left joined to a 2×2 strip on the
/// right, so the boundary curvature switches from 1 to 0 at `x = 0`.
pub fn curvature_label(x: f64, y: f64) -> usize {
    let half_disc = x < 0.0 && x * x + y * y < 1.0;
    let strip = (0.0..=2.0).contains(&x) && y.abs() < 1.0;
    usize::from(half_disc || strip)
}

/// `n` points uniform on [`CURVATURE_BOX`], labeled by [`curvature_label`].
pub fn gen_curvature_dataset(n: usize, seed: u64) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(Error::Argument("curvature dataset needs n >= 1".into()));
    }
    let [x_lo, x_hi, y_lo, y_hi] = CURVATURE_BOX;
    let mut rng = Rng::substream(seed, stream::DATA);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.range(x_lo, x_hi);
        let y = rng.range(y_lo, y_hi);
        data.extend([x, y]);
        labels.push(curvature_label(x, y));
    }
    LabeledDataset::new(Matrix::new(n, 2, data)?, labels, 2)
}
