//! Experiment configuration: one JSON file with sections
//! {data, model, train, eval, baseline}, individually overridable from the
//! command line via dotted paths (e.g. `train.epochs=200`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use quga_core::gan::{Differentiator, GeneratorConfig, GeneratorKind, TrainConfig};
use quga_core::sim::{AnsatzFamily, AnsatzSpec};

use crate::CliError;

pub const MODEL_NAMES: [&str; 5] = ["classical", "qugan36", "qugan66", "qugan72", "qugan132"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub baseline: BaselineSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub ports_path: String,
    pub dataset_path: String,
    pub n_graphs: usize,
    pub seed: u64,
    pub threshold_nm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_disc: f64,
    pub lr_gen: f64,
    pub seeds: Vec<u64>,
    pub eval_every: usize,
    pub differentiator: Differentiator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub eval_samples: usize,
    pub bins: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    pub n_samples: usize,
    pub seed: u64,
    /// Renormalize each KDE draw to sum one before the triangle test,
    /// mirroring the generators' post-processing. Validity verdicts are
    /// scale-invariant, so this only changes the persisted sample values.
    pub renormalize: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            ports_path: "data/ports.csv".into(),
            dataset_path: "data/dataset_1000.csv".into(),
            n_graphs: 1000,
            seed: 42,
            threshold_nm: 100.0,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            name: "qugan36".into(),
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        // Desk-scale preset; configs/paper.json carries the full-scale run.
        Self {
            epochs: 200,
            batch_size: 32,
            lr_disc: 0.3,
            lr_gen: 0.001,
            seeds: vec![0, 1, 2],
            eval_every: 10,
            differentiator: Differentiator::Adjoint,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            eval_samples: 1000,
            bins: 50,
        }
    }
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            seed: 12345,
            renormalize: true,
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            baseline: BaselineSection::default(),
        }
    }
}

impl Config {
    /// Load a config file (or the defaults), apply dotted-path overrides,
    /// and validate everything before any work starts. Returns the config
    /// and the hash that every output file embeds.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<(Self, String), CliError> {
        let mut value = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::Usage(format!("config {} is not valid JSON: {e}", p.display()))
                })?
            }
            None => serde_json::to_value(Config::default()).expect("defaults serialize"),
        };
        for entry in overrides {
            apply_override(&mut value, entry)?;
        }
        let config: Config = serde_json::from_value(value)
            .map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
        config.validate()?;
        let hash = config.hash();
        Ok((config, hash))
    }

    fn validate(&self) -> Result<(), CliError> {
        self.train_config()
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        generator_config(&self.model.name)?;
        if self.data.n_graphs == 0 {
            return Err(CliError::Usage("data.n_graphs must be at least 1".into()));
        }
        if self.baseline.n_samples == 0 {
            return Err(CliError::Usage("baseline.n_samples must be at least 1".into()));
        }
        if self.eval.bins < 2 {
            return Err(CliError::Usage("eval.bins must be at least 2".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form (sorted keys, defaults
    /// materialized).
    pub fn hash(&self) -> String {
        let canonical =
            serde_json::to_string(&serde_json::to_value(self).expect("config serializes"))
                .expect("value serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .fold(String::new(), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr_disc: self.train.lr_disc,
            lr_gen: self.train.lr_gen,
            seeds: self.train.seeds.clone(),
            eval_samples: self.eval.eval_samples,
            eval_every: self.train.eval_every,
            differentiator: self.train.differentiator,
        }
    }
}

/// Map a model name onto its generator architecture.
pub fn generator_config(name: &str) -> Result<GeneratorConfig, CliError> {
    let kind = match name {
        "classical" => GeneratorKind::Classical,
        "qugan36" => quantum(AnsatzFamily::RxFixedY, 5),
        "qugan66" => quantum(AnsatzFamily::RxFixedY, 10),
        "qugan72" => quantum(AnsatzFamily::RxRy, 5),
        "qugan132" => quantum(AnsatzFamily::RxRy, 10),
        other => {
            return Err(CliError::Usage(format!(
                "unknown model {other:?}; valid names: {}",
                MODEL_NAMES.join(", ")
            )))
        }
    };
    GeneratorConfig::new(kind).map_err(|e| CliError::Usage(e.to_string()))
}

/// Trainable parameter count each model must report at startup.
pub fn expected_param_count(name: &str) -> usize {
    match name {
        "classical" => 136,
        "qugan36" => 36,
        "qugan66" => 66,
        "qugan72" => 72,
        "qugan132" => 132,
        _ => unreachable!("validated model name"),
    }
}

fn quantum(family: AnsatzFamily, layers: usize) -> GeneratorKind {
    GeneratorKind::Quantum(AnsatzSpec::new(family, layers, 6).expect("6-qubit spec is valid"))
}

/// Apply one `a.b.c=value` override to the JSON tree. The value is parsed as
/// JSON when possible and falls back to a plain string.
fn apply_override(root: &mut serde_json::Value, entry: &str) -> Result<(), CliError> {
    let (path, raw) = entry
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {entry:?} is not KEY=VALUE")))?;
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = root;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(CliError::Usage(format!("override path {path:?} is malformed")));
    }
    for segment in &segments[..segments.len() - 1] {
        node = node
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("override path {path:?} crosses a non-object")))?
            .entry(segment.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| CliError::Usage(format!("override path {path:?} crosses a non-object")))?
        .insert(segments[segments.len() - 1].to_string(), parsed);
    Ok(())
}
