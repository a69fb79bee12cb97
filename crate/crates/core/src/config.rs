//! Experiment configuration: one TOML document with a section per stage.
//!
//! Relative paths (data files, output directory) resolve against the
//! directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fl::{RoundConfig, StrategyKind};
use crate::models::{Arch, ModelSpec, OptimizerKind, TrainConfig};
use crate::preprocess::{PreprocessConfig, WindowConfig, THROUGHPUT};
use crate::stream::{QoECoefficients, StreamConfig};
use crate::synthetic::{SyntheticClient, SyntheticSpec};
use crate::trace::ColumnMapping;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub federation: FederationConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub stream: StreamSection,
    #[serde(default)]
    pub qoe: QoECoefficients,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub synthetic: Option<SyntheticSection>,
    #[serde(default)]
    pub files: Vec<FileSource>,
    /// Named column mappings referenced by `files`. `canonical` is built in.
    #[serde(default)]
    pub mappings: BTreeMap<String, ColumnMapping>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    /// Number of generated clients when `clients` is empty.
    pub count: usize,
    pub length: usize,
    pub offset_min: f64,
    pub offset_max: f64,
    /// Explicit per-client parameters; overrides `count` and the offsets.
    pub clients: Vec<SyntheticClient>,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection {
            count: 8,
            length: 600,
            offset_min: 10.0,
            offset_max: 100.0,
            clients: Vec::new(),
        }
    }
}

impl SyntheticSection {
    pub fn spec(&self) -> SyntheticSpec {
        if self.clients.is_empty() {
            SyntheticSpec::spread(self.count, self.length, self.offset_min, self.offset_max)
        } else {
            SyntheticSpec {
                length: self.length,
                clients: self.clients.clone(),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    pub path: PathBuf,
    #[serde(default = "canonical_name")]
    pub mapping: String,
    /// Overrides the file stem as client id.
    #[serde(default)]
    pub client_id: Option<String>,
}

fn canonical_name() -> String {
    "canonical".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub hidden: Option<usize>,
    pub layers: Option<usize>,
    pub heads: Option<usize>,
    pub ff_hidden: Option<usize>,
    pub dense: Option<usize>,
    pub use_batchnorm: bool,
    pub positional_encoding: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Arch::Lstm,
            hidden: None,
            layers: None,
            heads: None,
            ff_hidden: None,
            dense: None,
            use_batchnorm: true,
            positional_encoding: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Defaults to the architecture's rate.
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    /// Defaults to the architecture's epoch count.
    pub local_epochs: Option<usize>,
    pub optimizer: OptimizerKind,
    pub prox_include_bn: bool,
    pub bn_momentum: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            learning_rate: None,
            batch_size: 32,
            local_epochs: None,
            optimizer: OptimizerKind::Adam,
            prox_include_bn: false,
            bn_momentum: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum StrategyName {
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "fedprox")]
    FedProx,
    #[default]
    #[serde(rename = "fedbn")]
    FedBn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    pub strategy: StrategyName,
    /// Required for FedProx.
    pub mu: Option<f64>,
    pub rounds: usize,
    pub participation: f64,
    pub aggregate_running_stats: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            strategy: StrategyName::FedBn,
            mu: None,
            rounds: 100,
            participation: 0.85,
            aggregate_running_stats: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub features: Vec<String>,
    pub horizons: Vec<usize>,
    pub kde_bandwidth: f64,
    pub kde_points: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            features: ["throughput", "rsrp", "sinr", "speed"]
                .into_iter()
                .map(String::from)
                .collect(),
            horizons: vec![1, 3, 5],
            kde_bandwidth: 1.0,
            kde_points: 101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorName {
    Model,
    HarmonicMean,
    Oracle,
    /// Always predicts the lowest ladder rate.
    ConstantMin,
}

impl PredictorName {
    pub fn name(self) -> &'static str {
        match self {
            PredictorName::Model => "model",
            PredictorName::HarmonicMean => "harmonic_mean",
            PredictorName::Oracle => "oracle",
            PredictorName::ConstantMin => "constant_min",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamSection {
    pub predictors: Vec<PredictorName>,
    pub sim: StreamConfig,
}

impl Default for StreamSection {
    fn default() -> Self {
        StreamSection {
            predictors: vec![PredictorName::Model, PredictorName::HarmonicMean, PredictorName::Oracle],
            sim: StreamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("run"),
        }
    }
}

impl ExperimentConfig {
    /// Parse, resolve relative paths against `base` and validate.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for f in &mut self.data.files {
            if f.path.is_relative() {
                f.path = base.join(&f.path);
            }
        }
        if self.output.dir.is_relative() {
            self.output.dir = base.join(&self.output.dir);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("config echo: {e}")))
    }

    /// Collect every problem rather than stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        match (&self.data.synthetic, self.data.files.is_empty()) {
            (None, true) => p.push("data: give either a synthetic section or at least one file".into()),
            (Some(_), false) => p.push("data: synthetic and files are mutually exclusive".into()),
            _ => {}
        }
        if let Some(s) = &self.data.synthetic {
            if s.clients.is_empty() && s.count == 0 {
                p.push("data.synthetic.count must be at least 1".into());
            }
            if !(s.offset_min >= 0.0 && s.offset_max >= s.offset_min) {
                p.push("data.synthetic offsets must satisfy 0 <= offset_min <= offset_max".into());
            }
            s.spec().validate(&mut p);
        }
        for (name, m) in &self.data.mappings {
            if let Err(Error::Validation(list)) = m.validate() {
                p.extend(list.into_iter().map(|e| format!("data.mappings.{name}: {e}")));
            }
        }
        for f in &self.data.files {
            if !f.path.is_file() {
                p.push(format!("data file {} does not exist", f.path.display()));
            }
            if f.mapping != "canonical" && !self.data.mappings.contains_key(&f.mapping) {
                p.push(format!(
                    "data file {}: unknown mapping `{}`",
                    f.path.display(),
                    f.mapping
                ));
            }
        }
        self.preprocess.validate(&mut p);
        self.window.validate(&mut p);
        if let Err(Error::Validation(list)) = self.model_spec().validate() {
            p.extend(list.into_iter().map(|e| format!("model: {e}")));
        }
        self.train_config().validate(&mut p);
        if matches!(self.federation.strategy, StrategyName::FedProx) && self.federation.mu.is_none() {
            p.push("federation.mu is required for fedprox".into());
        }
        if self.federation.mu.is_some() && !matches!(self.federation.strategy, StrategyName::FedProx) {
            p.push("federation.mu only applies to fedprox".into());
        }
        self.round_config().validate(&mut p);
        if self.analysis.horizons.is_empty() {
            p.push("analysis.horizons must not be empty".into());
        }
        if !(self.analysis.kde_bandwidth > 0.0) || self.analysis.kde_points < 2 {
            p.push("analysis.kde_bandwidth must be positive and kde_points at least 2".into());
        }
        if self
            .analysis
            .features
            .iter()
            .any(|f| f != THROUGHPUT && f.parse::<crate::trace::Field>().is_err())
        {
            p.push("analysis.features: unknown feature name".into());
        }
        self.stream.sim.validate(&mut p);
        self.qoe.validate(&mut p);
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }

    pub fn mapping(&self, name: &str) -> Option<ColumnMapping> {
        if name == "canonical" {
            return Some(
                self.data
                    .mappings
                    .get(name)
                    .cloned()
                    .unwrap_or_else(ColumnMapping::canonical),
            );
        }
        self.data.mappings.get(name).cloned()
    }

    pub fn model_spec(&self) -> ModelSpec {
        let m = &self.model;
        let mut s = ModelSpec::new(
            m.arch,
            self.preprocess.features.len(),
            self.window.history,
            self.window.horizon,
        );
        if let Some(h) = m.hidden {
            s.hidden = h;
            s.ff_hidden = 2 * h;
        }
        s.layers = m.layers.unwrap_or(s.layers);
        s.heads = m.heads.unwrap_or(s.heads);
        s.ff_hidden = m.ff_hidden.unwrap_or(s.ff_hidden);
        s.dense = m.dense.unwrap_or(s.dense);
        s.use_batchnorm = m.use_batchnorm;
        s.positional_encoding = m.positional_encoding;
        s
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        let mut c = TrainConfig::for_arch(self.model.arch);
        c.learning_rate = t.learning_rate.unwrap_or(c.learning_rate);
        c.local_epochs = t.local_epochs.unwrap_or(c.local_epochs);
        c.batch_size = t.batch_size;
        c.optimizer = t.optimizer;
        c.prox_include_bn = t.prox_include_bn;
        c.bn_momentum = t.bn_momentum;
        c
    }

    pub fn strategy(&self) -> StrategyKind {
        match self.federation.strategy {
            StrategyName::FedAvg => StrategyKind::FedAvg,
            StrategyName::FedProx => StrategyKind::FedProx {
                mu: self.federation.mu.unwrap_or(0.0),
            },
            StrategyName::FedBn => StrategyKind::FedBn,
        }
    }

    pub fn round_config(&self) -> RoundConfig {
        RoundConfig {
            total_rounds: self.federation.rounds,
            participation: self.federation.participation,
            strategy: self.strategy(),
            seed: self.seed,
            aggregate_running_stats: self.federation.aggregate_running_stats,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "seed = 3\n[data.synthetic]\ncount = 2\nlength = 100\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, Path::new("/tmp")).unwrap();
        assert_eq!(cfg.federation.rounds, 100);
        assert_eq!(cfg.model_spec().arch, Arch::Lstm);
        assert_eq!(cfg.train_config().learning_rate, 0.0003);
        assert_eq!(cfg.output.dir, PathBuf::from("/tmp/run"));
        let echo = cfg.to_toml().unwrap();
        assert_eq!(
            ExperimentConfig::from_toml(&echo, Path::new("/elsewhere")).unwrap(),
            cfg
        );
    }

    #[test]
    fn seed_is_mandatory() {
        let r = ExperimentConfig::from_toml("[data.synthetic]\ncount = 2\n", Path::new("."));
        assert!(matches!(r, Err(Error::Parse(_))));
    }

    #[test]
    fn every_problem_is_listed() {
        let text = "seed = 1\n[[data.files]]\npath = \"/no/such/file.csv\"\nmapping = \"mnwild\"\n\
                    [federation]\nstrategy = \"fedprox\"\nparticipation = 1.5\n[window]\nhistory = 0\n";
        let Err(Error::Validation(p)) = ExperimentConfig::from_toml(text, Path::new(".")) else {
            panic!("expected validation failure");
        };
        assert!(p.len() >= 5, "{p:#?}");
        assert!(p.iter().any(|e| e.contains("does not exist")));
        assert!(p.iter().any(|e| e.contains("unknown mapping")));
        assert!(p.iter().any(|e| e.contains("mu is required")));
        assert!(p.iter().any(|e| e.contains("participation")));
        assert!(p.iter().any(|e| e.contains("history")));
    }

    #[test]
    fn unknown_keys_rejected() {
        let r = ExperimentConfig::from_toml(&format!("{MINIMAL}[train]\nlr = 0.1\n"), Path::new("."));
        assert!(matches!(r, Err(Error::Parse(_))));
    }
}
