use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    LogUniform { low: f64, high: f64 },
    Uniform { low: f64, high: f64 },
    Choice { values: Vec<Value> },
}

impl Distribution {
    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            Distribution::LogUniform { low, high } => *low > 0.0 && low <= high && high.is_finite(),
            Distribution::Uniform { low, high } => low <= high && low.is_finite() && high.is_finite(),
            Distribution::Choice { values } => !values.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("invalid search range for `{name}`")))
        }
    }

    fn sample(&self, rng: &mut Rng) -> Value {
        match self {
            Distribution::LogUniform { low, high } => Value::from(rng.range(low.ln(), high.ln()).exp()),
            Distribution::Uniform { low, high } => Value::from(rng.range(*low, *high)),
            Distribution::Choice { values } => values[rng.below(values.len())].clone(),
        }
    }
}

/// Hyperparameter name → distribution. Names are free-form; callers decide
/// how an assignment maps onto a configuration.
pub type SearchSpace = BTreeMap<String, Distribution>;
pub type Assignment = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub rank: usize,
    pub trial: usize,
    pub seed: u64,
    pub params: Assignment,
    /// Validation error (lower is better).
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome<T> {
    /// Sorted by score, ties by trial index.
    pub leaderboard: Vec<LeaderboardEntry>,
    pub best: Option<T>,
}

fn finite_size(space: &SearchSpace) -> Option<usize> {
    space.values().try_fold(1usize, |acc, d| match d {
        Distribution::Choice { values } => acc.checked_mul(values.len()),
        _ => None,
    })
}

/// Runs up to `budget` trials with seeds derived from `base_seed`. When every
/// dimension is a choice set, assignments are drawn without repetition, so the
/// search stops early once the space is exhausted. `objective` returns the
/// score and an artifact kept for the best trial.
pub fn random_search<T>(
    space: &SearchSpace,
    budget: usize,
    base_seed: u64,
    mut objective: impl FnMut(&Assignment, u64) -> Result<(f64, T)>,
) -> Result<SearchOutcome<T>> {
    for (name, dist) in space {
        dist.validate(name)?;
    }
    let distinct = finite_size(space).map(|n| n.min(budget));
    let target = distinct.unwrap_or(budget);
    let mut rng = Rng::substream(base_seed, stream::SEARCH);
    let mut seen = BTreeSet::new();
    let mut entries = Vec::with_capacity(target);
    let mut best: Option<(f64, usize, T)> = None;
    while entries.len() < target {
        let params: Assignment = space.iter().map(|(k, d)| (k.clone(), d.sample(&mut rng))).collect();
        if distinct.is_some() && !seen.insert(serde_json::to_string(&params)?) {
            continue;
        }
        let trial = entries.len();
        let seed = Rng::derive_seed(base_seed, stream::SEARCH, trial as u64);
        let (score, artifact) = objective(&params, seed)?;
        let score = if score.is_nan() { f64::INFINITY } else { score };
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, trial, artifact));
        }
        entries.push(LeaderboardEntry {
            rank: 0,
            trial,
            seed,
            params,
            score,
        });
    }
    entries.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.trial.cmp(&b.trial)));
    for (rank, e) in entries.iter_mut().enumerate() {
        e.rank = rank + 1;
    }
    Ok(SearchOutcome {
        leaderboard: entries,
        best: best.map(|(_, _, t)| t),
    })
}
