//! Binary note sequences for next-step prediction.
//!
//! On disk a batch is a JSON document
//! `{"schema": "lpunit.pianoroll/v1", "dim": d, "sequences": [[[notes…], …], …]}`
//! where each step lists its active note indices.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Rng};

pub const PIANOROLL_SCHEMA: &str = "lpunit.pianoroll/v1";

/// `targets[t]` is step `t`; `inputs[t]` is step `t − 1`, zero for `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Sequence {
    pub fn from_steps(steps: Vec<Vec<f64>>) -> Self {
        let dim = steps.first().map_or(0, Vec::len);
        let inputs = std::iter::once(vec![0.0; dim])
            .chain(steps.iter().take(steps.len().saturating_sub(1)).cloned())
            .take(steps.len())
            .collect();
        Self { inputs, targets: steps }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub dim: usize,
    pub sequences: Vec<Sequence>,
}

impl SequenceBatch {
    pub fn total_steps(&self) -> usize {
        self.sequences.iter().map(Sequence::len).sum()
    }

    /// Splits off the last `round(n · fraction)` sequences.
    pub fn split_tail(&self, fraction: f64) -> (Self, Self) {
        let n_tail = (self.sequences.len() as f64 * fraction).round() as usize;
        let cut = self.sequences.len() - n_tail.min(self.sequences.len());
        let (head, tail) = self.sequences.split_at(cut);
        (
            Self { dim: self.dim, sequences: head.to_vec() },
            Self { dim: self.dim, sequences: tail.to_vec() },
        )
    }
}

#[derive(Serialize, Deserialize)]
struct RollDocument {
    schema: String,
    dim: usize,
    sequences: Vec<Vec<Vec<usize>>>,
}

pub fn parse_pianoroll(text: &str) -> Result<SequenceBatch> {
    let doc: RollDocument = serde_json::from_str(text)?;
    if doc.schema != PIANOROLL_SCHEMA {
        return Err(Error::Format {
            location: "schema".into(),
            message: format!("expected `{PIANOROLL_SCHEMA}`, found `{}`", doc.schema),
        });
    }
    let dim = doc.dim;
    let mut sequences = Vec::with_capacity(doc.sequences.len());
    for (s, seq) in doc.sequences.iter().enumerate() {
        let mut steps = Vec::with_capacity(seq.len());
        for (t, notes) in seq.iter().enumerate() {
            let mut v = vec![0.0; dim];
            for &n in notes {
                if n >= dim {
                    return Err(Error::Format {
                        location: format!("sequence {s}, step {t}"),
                        message: format!("note index {n} out of range for dim {dim}"),
                    });
                }
                v[n] = 1.0;
            }
            steps.push(v);
        }
        sequences.push(Sequence::from_steps(steps));
    }
    Ok(SequenceBatch { dim, sequences })
}

pub fn load_pianoroll(path: impl AsRef<Path>) -> Result<SequenceBatch> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pianoroll(&text)
}

pub fn to_pianoroll_json(batch: &SequenceBatch) -> Result<String> {
    let sequences = batch
        .sequences
        .iter()
        .map(|seq| {
            seq.targets
                .iter()
                .map(|step| step.iter().enumerate().filter(|(_, &v)| v > 0.5).map(|(i, _)| i).collect())
                .collect()
        })
        .collect();
    let doc = RollDocument {
        schema: PIANOROLL_SCHEMA.into(),
        dim: batch.dim,
        sequences,
    };
    Ok(serde_json::to_string(&doc)?)
}

pub fn save_pianoroll(batch: &SequenceBatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_pianoroll_json(batch)?).map_err(|e| Error::io(path, e))
}

/// Synthetic periodic rolls: a bank of `motifs` random patterns, each a cycle
/// of `2..=max_period` random steps with note probability `density`. Every
/// sequence repeats one motif from a random phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodicRollSpec {
    pub sequences: usize,
    pub length: usize,
    pub dim: usize,
    pub max_period: usize,
    pub motifs: usize,
    pub density: f64,
}

impl Default for PeriodicRollSpec {
    fn default() -> Self {
        Self {
            sequences: 200,
            length: 50,
            dim: 8,
            max_period: 6,
            motifs: 8,
            density: 0.5,
        }
    }
}

pub fn gen_periodic_pianoroll(spec: &PeriodicRollSpec, seed: u64) -> Result<SequenceBatch> {
    if spec.max_period < 2 || spec.motifs == 0 || spec.dim == 0 {
        return Err(Error::Argument(
            "periodic roll needs max_period >= 2, motifs >= 1 and dim >= 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.density) {
        return Err(Error::Argument(format!("density must be in [0, 1], got {}", spec.density)));
    }
    let mut rng = Rng::substream(seed, stream::DATA);
    let bank: Vec<Vec<Vec<f64>>> = (0..spec.motifs)
        .map(|_| {
            let period = 2 + rng.below(spec.max_period - 1);
            (0..period)
                .map(|_| (0..spec.dim).map(|_| if rng.bernoulli(spec.density) { 1.0 } else { 0.0 }).collect())
                .collect()
        })
        .collect();
    let sequences = (0..spec.sequences)
        .map(|_| {
            let motif = &bank[rng.below(bank.len())];
            let phase = rng.below(motif.len());
            let steps = (0..spec.length).map(|t| motif[(phase + t) % motif.len()].clone()).collect();
            Sequence::from_steps(steps)
        })
        .collect();
    Ok(SequenceBatch { dim: spec.dim, sequences })
}
