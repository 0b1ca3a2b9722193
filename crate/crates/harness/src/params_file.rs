//! TOML parameter files.
//!
//! ```toml
//! version = 1
//! K = 2
//! L = 16
//! temperatures = [1.0, ...]   # L + 1 values
//! step_sizes = [1.0, ...]     # L values
//!
//! [metadata]                  # optional provenance
//! modulation = "bpsk"
//! seed = 0
//! ```
//!
//! Floats are written in shortest round-trip form, so save followed by load
//! reproduces every parameter bit for bit.

use std::path::Path;

use cmdnet_core::{ChannelConfig, CmdParams, Constellation, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const PARAMS_VERSION: u32 = 1;

/// Training provenance stored alongside the parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_rx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ebn0_range_db: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl ParamsMetadata {
    pub fn from_training(
        config: &TrainConfig,
        constellation: &Constellation,
        channel: &ChannelConfig,
    ) -> Self {
        Self {
            modulation: Some(constellation.modulation().name().into()),
            mode: Some(config.mode.name().into()),
            n_tx: Some(channel.n_tx),
            n_rx: Some(channel.n_rx),
            seed: Some(config.seed),
            init: Some(config.init.name().into()),
            batch_size: Some(config.batch_size),
            iterations: Some(config.iterations),
            ebn0_range_db: Some([config.ebn0_range_db.0, config.ebn0_range_db.1]),
            learning_rate: Some(config.adam.learning_rate),
            beta1: Some(config.adam.beta1),
            beta2: Some(config.adam.beta2),
            epsilon: Some(config.adam.epsilon),
        }
    }
}

/// Parameters together with the alphabet size they were trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedParams {
    pub k: usize,
    pub params: CmdParams,
    pub metadata: ParamsMetadata,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    version: u32,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "L")]
    layers: usize,
    temperatures: Vec<f64>,
    step_sizes: Vec<f64>,
    #[serde(default)]
    metadata: ParamsMetadata,
}

pub fn to_toml_string(saved: &SavedParams) -> Result<String> {
    let file = ParamsFile {
        version: PARAMS_VERSION,
        k: saved.k,
        layers: saved.params.n_layers(),
        temperatures: saved.params.temperatures().to_vec(),
        step_sizes: saved.params.step_sizes().to_vec(),
        metadata: saved.metadata.clone(),
    };
    toml::to_string(&file)
        .map_err(|e| HarnessError::config(format!("cannot encode parameters: {e}")))
}

pub fn from_toml_str(text: &str) -> Result<SavedParams> {
    let file: ParamsFile = toml::from_str(text)
        .map_err(|e| HarnessError::config(format!("malformed parameter file: {e}")))?;
    if file.version != PARAMS_VERSION {
        return Err(HarnessError::config(format!(
            "parameter file version {} is not supported (expected {PARAMS_VERSION})",
            file.version
        )));
    }
    if file.k < 2 {
        return Err(HarnessError::config(format!(
            "K = {} must be at least 2",
            file.k
        )));
    }
    if file.temperatures.len() != file.layers + 1 || file.step_sizes.len() != file.layers {
        return Err(HarnessError::config(format!(
            "L = {} does not match {} temperatures and {} step sizes",
            file.layers,
            file.temperatures.len(),
            file.step_sizes.len()
        )));
    }
    let params = CmdParams::new(file.temperatures, file.step_sizes)?;
    Ok(SavedParams {
        k: file.k,
        params,
        metadata: file.metadata,
    })
}

pub fn save_params(path: &Path, saved: &SavedParams) -> Result<()> {
    std::fs::write(path, to_toml_string(saved)?).map_err(|e| HarnessError::io(path, e))
}

pub fn load_params(path: &Path) -> Result<SavedParams> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    from_toml_str(&text).map_err(|e| match e {
        HarnessError::Config(msg) => HarnessError::config(format!("{}: {msg}", path.display())),
        HarnessError::Core(inner) => HarnessError::config(format!("{}: {inner}", path.display())),
        other => other,
    })
}
