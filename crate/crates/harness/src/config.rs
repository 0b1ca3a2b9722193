//! Experiment configuration files.
//!
//! ```toml
//! scenario = "bpsk-4x4"
//! modulation = "bpsk"
//! seed = 1
//! output = "bpsk-4x4.csv"
//! ebn0_db = [0.0, 5.0, 10.0]
//!
//! [channel]
//! n_tx = 4
//! n_rx = 4
//! correlation = 0.5          # optional; omitted means i.i.d.
//!
//! [stop]
//! min_errors = 1000
//! max_instances = 100000
//!
//! [[detector]]
//! kind = "cmd"               # cmd, cmdnet, mf, mmse, map, io
//! mode = "binary"            # cmd / cmdnet only
//! layers = 8                 # cmd only
//! schedule = "splin"         # cmd only
//!
//! [[detector]]
//! kind = "cmdnet"
//! params = "trained.toml"    # relative to this file
//!
//! [training]                 # every key optional
//! iterations = 10000
//!
//! [calibration]
//! ebn0_db = 10.0
//! instances = 25000
//! ```
//!
//! Unknown keys are rejected.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cmdnet_core::training::default_layers;
use cmdnet_core::{
    AdamConfig, ChannelConfig, ChannelModel, CmdDetector, CmdMode, Constellation, Detector,
    InitSchedule, IoOracle, MapOracle, MatchedFilter, Mmse, Modulation, OracleLimits, TrainConfig,
};
use serde::{Deserialize, Deserializer};

use crate::error::{HarnessError, Result};
use crate::params_file::load_params;

/// Iteration count selected by `--long-run`.
pub const LONG_RUN_ITERATIONS: usize = 100_000;

fn parse<'de, D, T>(d: D) -> std::result::Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: Display,
{
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

fn parse_opt<'de, D, T>(d: D) -> std::result::Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: Display,
{
    parse(d).map(Some)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub n_tx: usize,
    pub n_rx: usize,
    /// Exponential receive correlation coefficient.
    #[serde(default)]
    pub correlation: Option<f64>,
}

/// Per-detector stop rule of a sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopRule {
    /// Bit errors after which a detector stops.
    pub min_errors: u64,
    /// Instance budget per detector and grid point.
    pub max_instances: u64,
    /// Instances simulated between stop-rule evaluations.
    pub round_size: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            min_errors: 1000,
            max_instances: 1_000_000,
            round_size: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    /// Untrained CMD with an initial schedule.
    Cmd,
    /// CMD with parameters from a file.
    Cmdnet,
    Mf,
    Mmse,
    Map,
    Io,
}

impl DetectorKind {
    fn name(self) -> &'static str {
        match self {
            Self::Cmd => "cmd",
            Self::Cmdnet => "cmdnet",
            Self::Mf => "mf",
            Self::Mmse => "mmse",
            Self::Map => "map",
            Self::Io => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default, deserialize_with = "parse_opt")]
    pub mode: Option<CmdMode>,
    #[serde(default)]
    pub layers: Option<usize>,
    #[serde(default, deserialize_with = "parse_opt")]
    pub schedule: Option<InitSchedule>,
    #[serde(default)]
    pub params: Option<PathBuf>,
}

impl DetectorSpec {
    pub fn label(&self) -> String {
        if let Some(label) = &self.label {
            return label.clone();
        }
        match self.mode {
            Some(CmdMode::Binary) => format!("{}-binary", self.kind.name()),
            _ => self.kind.name().into(),
        }
    }
}

/// Overrides of the training defaults for the constellation.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub batch_size: Option<usize>,
    pub iterations: Option<usize>,
    pub ebn0_range_db: Option<[f64; 2]>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub layers: Option<usize>,
    #[serde(default, deserialize_with = "parse_opt")]
    pub init: Option<InitSchedule>,
    #[serde(default, deserialize_with = "parse_opt")]
    pub mode: Option<CmdMode>,
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub ebn0_db: f64,
    pub instances: u64,
    #[serde(default = "default_llr_bins")]
    pub llr_bins: usize,
}

fn default_llr_bins() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    #[serde(deserialize_with = "parse")]
    pub modulation: Modulation,
    #[serde(default)]
    pub priors: Option<Vec<f64>>,
    pub channel: ChannelSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub ebn0_db: Vec<f64>,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default, rename = "detector")]
    pub detectors: Vec<DetectorSpec>,
    #[serde(default)]
    pub training: Option<TrainingSection>,
    #[serde(default)]
    pub calibration: Option<CalibrationSection>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// A detector with its report label.
pub struct NamedDetector {
    pub label: String,
    pub detector: Box<dyn Detector>,
}

impl NamedDetector {
    pub fn new(label: impl Into<String>, detector: impl Detector + 'static) -> Self {
        Self {
            label: label.into(),
            detector: Box::new(detector),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)
            .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    /// Parses and validates; relative paths resolve against the working
    /// directory.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ebn0_db.is_empty() {
            return Err(HarnessError::config("the Eb/N0 grid is empty"));
        }
        if self.ebn0_db.iter().any(|e| !e.is_finite()) {
            return Err(HarnessError::config("Eb/N0 values must be finite"));
        }
        if self.stop.min_errors == 0 || self.stop.max_instances == 0 || self.stop.round_size == 0 {
            return Err(HarnessError::config("stop rule values must be at least 1"));
        }
        self.constellation()?;
        self.channel().validate()?;
        let mut labels: Vec<String> = self.detectors.iter().map(DetectorSpec::label).collect();
        if let Some(bad) = labels
            .iter()
            .find(|l| l.is_empty() || l.contains([',', '"', '\n']))
        {
            return Err(HarnessError::config(format!(
                "detector label `{bad}` is not a plain CSV field"
            )));
        }
        labels.sort();
        if let Some(pair) = labels.windows(2).find(|p| p[0] == p[1]) {
            return Err(HarnessError::config(format!(
                "duplicate detector label `{}`",
                pair[0]
            )));
        }
        if let Some(c) = &self.calibration {
            if c.instances == 0 || c.llr_bins == 0 || !c.ebn0_db.is_finite() {
                return Err(HarnessError::config(
                    "calibration needs instances, LLR bins and a finite Eb/N0",
                ));
            }
        }
        Ok(())
    }

    pub fn constellation(&self) -> Result<Constellation> {
        let c = Constellation::new(self.modulation);
        match &self.priors {
            Some(p) => Ok(c.with_priors(p.clone())?),
            None => Ok(c),
        }
    }

    pub fn channel(&self) -> ChannelConfig {
        let model = match self.channel.correlation {
            Some(r) => ChannelModel::ColumnCorrelated(r),
            None => ChannelModel::IidGaussian,
        };
        ChannelConfig {
            n_tx: self.channel.n_tx,
            n_rx: self.channel.n_rx,
            model,
            seed: self.seed,
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn build_detectors(&self) -> Result<Vec<NamedDetector>> {
        let c = self.constellation()?;
        let channel = self.channel();
        let real_dims = if self.modulation.is_real() {
            channel.n_tx
        } else {
            2 * channel.n_tx
        };
        self.detectors
            .iter()
            .map(|spec| {
                let label = spec.label();
                let mode = spec.mode.unwrap_or(CmdMode::MultiClass);
                let detector: Box<dyn Detector> = match spec.kind {
                    DetectorKind::Cmd => {
                        let layers = spec.layers.unwrap_or_else(|| default_layers(&channel));
                        let schedule = spec.schedule.unwrap_or_default();
                        let params = cmdnet_core::training::init_params(layers, c.k(), schedule)?;
                        Box::new(CmdDetector::new(params, mode))
                    }
                    DetectorKind::Cmdnet => {
                        let path = spec.params.as_ref().ok_or_else(|| {
                            HarnessError::config(format!("detector `{label}` needs a parameter file"))
                        })?;
                        let saved = load_params(&self.resolve(path))?;
                        if saved.k != c.k() {
                            return Err(HarnessError::config(format!(
                                "detector `{label}`: parameters are for K = {}, the constellation has K = {}",
                                saved.k,
                                c.k()
                            )));
                        }
                        Box::new(CmdDetector::new(saved.params, mode))
                    }
                    DetectorKind::Mf => Box::new(MatchedFilter),
                    DetectorKind::Mmse => Box::new(Mmse),
                    DetectorKind::Map | DetectorKind::Io => {
                        let limits = OracleLimits::default();
                        limits.check(c.k(), real_dims)?;
                        if spec.kind == DetectorKind::Map {
                            Box::new(MapOracle { limits })
                        } else {
                            Box::new(IoOracle { limits })
                        }
                    }
                };
                if mode == CmdMode::Binary && c.k() != 2 {
                    return Err(cmdnet_core::Error::ModeMismatch(c.k()).into());
                }
                Ok(NamedDetector { label, detector })
            })
            .collect()
    }

    /// Training settings: the constellation defaults with the `[training]`
    /// overrides applied.
    pub fn train_config(&self, long_run: bool) -> Result<TrainConfig> {
        let c = self.constellation()?;
        let t = self.training.clone().unwrap_or_default();
        let layers = t.layers.unwrap_or_else(|| default_layers(&self.channel()));
        let mut config = TrainConfig::for_constellation(&c, layers);
        config.seed = self.seed;
        if let Some(v) = t.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = t.iterations {
            config.iterations = v;
        }
        if let Some([lo, hi]) = t.ebn0_range_db {
            config.ebn0_range_db = (lo, hi);
        }
        let defaults = AdamConfig::default();
        config.adam = AdamConfig {
            learning_rate: t.learning_rate.unwrap_or(defaults.learning_rate),
            beta1: t.beta1.unwrap_or(defaults.beta1),
            beta2: t.beta2.unwrap_or(defaults.beta2),
            epsilon: t.epsilon.unwrap_or(defaults.epsilon),
        };
        if let Some(v) = t.init {
            config.init = v;
        }
        if let Some(v) = t.mode {
            config.mode = v;
        }
        if let Some(v) = t.checkpoint_every {
            config.checkpoint_every = v;
        }
        if long_run {
            config.iterations = LONG_RUN_ITERATIONS;
        }
        config.validate()?;
        Ok(config)
    }
}
