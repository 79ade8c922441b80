//! Labeled point sets and binary sequence sets, their generators and file formats.

mod csv_io;
mod idx;
mod pianoroll;
mod synthetic;

pub use csv_io::{read_csv, read_csv_from, write_csv, write_csv_to};
pub use idx::{load_idx, load_mnist, parse_idx, IdxData, MNIST_FILES};
pub use pianoroll::{
    gen_periodic_pianoroll, load_pianoroll, parse_pianoroll, save_pianoroll, to_pianoroll_json, PeriodicRollSpec,
    Sequence, SequenceBatch, PIANOROLL_SCHEMA,
};
pub use synthetic::{
    curvature_label, gen_curvature_dataset, gen_gaussian_mixture, three_gaussians, two_gaussians, MixtureComponent,
    CURVATURE_BOX, CURVATURE_POSITIVE_FRACTION,
};

use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl LabeledDataset {
    pub fn new(x: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(Error::shape(
                "LabeledDataset::new",
                format!("{} rows", x.rows()),
                format!("{} labels", labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Argument(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Self { x, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Deterministic holdout split: a seeded shuffle, then the first
    /// `round(n · valid_fraction)` points form the validation set.
    pub fn split(&self, valid_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&valid_fraction) {
            return Err(Error::Argument(format!(
                "validation fraction must be in [0, 1), got {valid_fraction}"
            )));
        }
        let mut rng = Rng::substream(seed, stream::SPLIT);
        let perm = rng.permutation(self.len());
        let n_valid = (self.len() as f64 * valid_fraction).round() as usize;
        let (valid, train) = perm.split_at(n_valid);
        Ok((self.subset(train), self.subset(valid)))
    }
}
