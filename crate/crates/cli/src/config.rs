//! JSON run configurations for `train` and `rnn-train`.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use lpunit::datasets::{
    gen_curvature_dataset, gen_gaussian_mixture, gen_periodic_pianoroll, load_mnist, load_pianoroll, read_csv,
    three_gaussians, two_gaussians, LabeledDataset, PeriodicRollSpec, SequenceBatch,
};
use lpunit::network::NetworkSpec;
use lpunit::recurrent::RnnSpec;
use lpunit::trainer::{SearchSpace, TrainConfig};
use lpunit::Error;

use crate::CliError;

fn default_sigma() -> f64 {
    0.5
}

fn default_gauss2() -> usize {
    500
}

fn default_gauss3() -> usize {
    400
}

fn default_curvature() -> usize {
    5000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
    },
    Gauss2 {
        #[serde(default = "default_gauss2")]
        per_class: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    Gauss3 {
        #[serde(default = "default_gauss3")]
        per_class: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    Curvature {
        #[serde(default = "default_curvature")]
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    /// The standard IDX files; the 10k test split becomes the test set.
    Mnist {
        dir: PathBuf,
    },
}

impl DataSource {
    /// Training data and, for sources that carry one, a test set.
    pub fn load(&self) -> Result<(LabeledDataset, Option<LabeledDataset>), CliError> {
        Ok(match self {
            DataSource::Csv { path } => (read_csv(path)?, None),
            DataSource::Gauss2 { per_class, sigma, seed } => {
                (gen_gaussian_mixture(&two_gaussians(*per_class, *sigma), *seed)?, None)
            }
            DataSource::Gauss3 { per_class, sigma, seed } => {
                (gen_gaussian_mixture(&three_gaussians(*per_class, *sigma), *seed)?, None)
            }
            DataSource::Curvature { n, seed } => (gen_curvature_dataset(*n, *seed)?, None),
            DataSource::Mnist { dir } => {
                let (train, test) = load_mnist(dir)?.ok_or_else(|| {
                    CliError::Lib(Error::Io {
                        path: dir.clone(),
                        source: std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST IDX files not found"),
                    })
                })?;
                (train, Some(test))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSettings {
    pub budget: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Keys are dotted paths into this configuration, e.g. `train.learning_rate`.
    pub space: SearchSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub data: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<DataSource>,
    pub model: NetworkSpec,
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSource {
    Periodic {
        #[serde(default)]
        roll: PeriodicRollSpec,
        #[serde(default)]
        seed: u64,
    },
    Pianoroll {
        path: PathBuf,
    },
}

impl SequenceSource {
    pub fn load(&self) -> Result<SequenceBatch, CliError> {
        Ok(match self {
            SequenceSource::Periodic { roll, seed } => gen_periodic_pianoroll(roll, *seed)?,
            SequenceSource::Pianoroll { path } => load_pianoroll(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnFile {
    pub data: SequenceSource,
    /// Fraction of sequences held out as the test set.
    #[serde(default)]
    pub test_fraction: f64,
    pub model: RnnSpec,
    pub train: TrainConfig,
}

/// Parses a JSON document, naming the offending field on failure.
pub fn parse_config<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
        path: origin.to_path_buf(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn read_config_value(path: &Path) -> Result<serde_json::Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_config(&text, path)
}

/// Sets `value` at a dotted `path` inside a JSON object, creating objects on the way.
pub fn set_path(root: &mut serde_json::Value, path: &str, value: serde_json::Value) -> Result<(), CliError> {
    let mut at = root;
    let mut parts = path.split('.').peekable();
    while let Some(key) = parts.next() {
        let obj = at
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("cannot set `{path}`: `{key}` is not inside an object")))?;
        if parts.peek().is_none() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        at = obj
            .entry(key.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Err(CliError::Usage(format!("empty configuration path `{path}`")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn schema_error_names_field() {
        let text = r#"{"data":{"kind":"gauss2"},"model":{"input_dim":2,"layers":[]},"train":{"learning_rate":"fast","epochs":1}}"#;
        let err = parse_config::<TrainFile>(text, Path::new("c.json")).unwrap_err();
        assert!(err.to_string().contains("train.learning_rate"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let text = r#"{"data":{"kind":"gauss2","bogus":1},"model":{"input_dim":2,"layers":[]},"train":{"learning_rate":0.1,"epochs":1}}"#;
        let err = parse_config::<TrainFile>(text, Path::new("c.json")).unwrap_err();
        assert!(err.to_string().contains("data"), "{err}");
    }

    #[test]
    fn dotted_paths() {
        let mut v = json!({"train": {"learning_rate": 0.1}});
        set_path(&mut v, "train.learning_rate", json!(0.5)).unwrap();
        set_path(&mut v, "train.extra.deep", json!(1)).unwrap();
        assert_eq!(v, json!({"train": {"learning_rate": 0.5, "extra": {"deep": 1}}}));
    }
}
