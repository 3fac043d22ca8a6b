//! TOML job configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{BackendOptions, BackendRegistry, Backends, DetectorConfig};
use crate::classifier::{ClassifierConfig, ModelType, TrainConfig};
use crate::datasets::{Dataset, Granularity, GranularityFile, GranularityMap};
use crate::error::{Error, Result};
use crate::graph::{GraphBuildConfig, GraphPipeline};
use crate::prompts::PromptConfig;

/// Environment variables that override path settings.
pub const ENV_DATA_ROOT: &str = "GRAPHSEG_DATA_ROOT";
pub const ENV_OUT: &str = "GRAPHSEG_OUT";
pub const ENV_CHECKPOINT: &str = "GRAPHSEG_CHECKPOINT";
pub const ENV_IMAGE: &str = "GRAPHSEG_IMAGE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSection {
    pub detector: String,
    pub logits: String,
    pub segmenter: String,
    /// Prompt text to RGB key for the mock logit provider.
    pub color_keys: BTreeMap<String, [u8; 3]>,
    pub logit_magnitude: f32,
    pub logit_noise: f32,
    pub color_tolerance: f32,
    pub region_tolerance: f32,
}

impl Default for BackendSection {
    fn default() -> Self {
        let o = BackendOptions::default();
        Self {
            detector: "mock-grid".into(),
            logits: "mock-color".into(),
            segmenter: "mock-region".into(),
            color_keys: BTreeMap::new(),
            logit_magnitude: o.logit_magnitude,
            logit_noise: o.logit_noise,
            color_tolerance: o.color_tolerance,
            region_tolerance: o.region_tolerance,
        }
    }
}

/// Classifier settings without the sizes that follow from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSection {
    pub model_type: ModelType,
    pub hidden_dim: usize,
    pub integration_dim: usize,
    pub dropout: f64,
    pub edge_dropout: f64,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            model_type: ModelType::Sage,
            hidden_dim: 256,
            integration_dim: 128,
            dropout: 0.1,
            edge_dropout: 0.3,
        }
    }
}

impl ClassifierSection {
    pub fn to_config(&self, num_classes: usize, input_dim: usize) -> ClassifierConfig {
        ClassifierConfig {
            model_type: self.model_type,
            hidden_dim: self.hidden_dim,
            integration_dim: self.integration_dim,
            dropout: self.dropout,
            edge_dropout: self.edge_dropout,
            num_classes,
            input_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Dataset directory (`images/`, `masks/`, `granularity.json`).
    pub root: Option<PathBuf>,
    /// Support indices for `train`; empty picks the first split.
    pub support: Vec<usize>,
    /// Test indices; empty means every item not used for support.
    pub test: Vec<usize>,
    pub n_support: usize,
    pub folds: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            root: None,
            support: Vec::new(),
            test: Vec::new(),
            n_support: 5,
            folds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    /// Cut a window into every truck body.
    pub hole: bool,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            count: 125,
            width: 96,
            height: 96,
            hole: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuneStage {
    /// Node F1 of the classifier.
    Classification,
    /// Dice of the fused segmentation.
    Segmentation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneSection {
    pub trials: usize,
    pub stage: TuneStage,
    pub train_pool: usize,
    pub test_pool: usize,
}

impl Default for TuneSection {
    fn default() -> Self {
        Self {
            trials: 20,
            stage: TuneStage::Classification,
            train_pool: 10,
            test_pool: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub image: Option<PathBuf>,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            out: PathBuf::from("runs"),
            checkpoint: None,
            image: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JobConfig {
    pub seed: u64,
    pub granularity: String,
    /// Accept values outside the tuning ranges (structural checks still apply).
    pub allow_out_of_range: bool,
    /// Text prompts whose logits are appended to every descriptor.
    pub text_prompts: Vec<String>,
    pub backend: BackendSection,
    pub detector: DetectorConfig,
    pub graph: GraphBuildConfig,
    pub classifier: ClassifierSection,
    pub train: TrainConfig,
    pub prompts: PromptConfig,
    pub data: DataSection,
    pub synth: SynthSection,
    pub tune: TuneSection,
    pub paths: PathsSection,
}

impl Default for JobConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            granularity: Granularity::Low.name().to_string(),
            allow_out_of_range: false,
            text_prompts: Vec::new(),
            backend: BackendSection::default(),
            detector: DetectorConfig::default(),
            graph: GraphBuildConfig::default(),
            classifier: ClassifierSection::default(),
            train: TrainConfig::default(),
            prompts: PromptConfig::default(),
            data: DataSection::default(),
            synth: SynthSection::default(),
            tune: TuneSection::default(),
            paths: PathsSection::default(),
        }
    }
}

impl JobConfig {
    /// Parses and validates; unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: JobConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, applies `GRAPHSEG_*` path overrides, validates.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut cfg: JobConfig = toml::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_env(|k| std::env::var_os(k));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("job config serializes to TOML")
    }

    /// Path overrides from the environment; `lookup` is `std::env::var_os` in
    /// production.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<std::ffi::OsString>) {
        if let Some(v) = lookup(ENV_DATA_ROOT) {
            self.data.root = Some(v.into());
        }
        if let Some(v) = lookup(ENV_OUT) {
            self.paths.out = v.into();
        }
        if let Some(v) = lookup(ENV_CHECKPOINT) {
            self.paths.checkpoint = Some(v.into());
        }
        if let Some(v) = lookup(ENV_IMAGE) {
            self.paths.image = Some(v.into());
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range_checks: [(&str, Result<()>); 4] = [
            ("detector", self.detector.validate()),
            ("graph", self.graph.validate()),
            ("classifier", self.classifier.to_config(2, 1).validate()),
            ("prompts", self.prompts.validate()),
        ];
        for (section, check) in range_checks {
            if let Err(e) = check {
                if self.allow_out_of_range {
                    log::warn!("[{section}] {e} (allowed by allow_out_of_range)");
                } else {
                    return Err(e.context(format!("[{section}]")));
                }
            }
        }
        if self.graph.k == 0 || self.detector.nms_radius == 0 || self.detector.min_points == 0 {
            return Err(Error::Config("k, nms_radius and min_points must be positive".into()));
        }
        self.classifier.to_config(2, 1).validate_structure()?;
        self.prompts.validate_structure()?;
        self.train.validate()?;
        if self.backend.logits == "mock-color" {
            if let Some(p) = self.text_prompts.iter().find(|p| !self.backend.color_keys.contains_key(*p)) {
                return Err(Error::Config(format!("text prompt `{p}` has no entry in [backend.color_keys]")));
            }
        }
        if self.data.n_support == 0 || self.data.folds == 0 {
            return Err(Error::Config("data.n_support and data.folds must be positive".into()));
        }
        if self.tune.trials == 0 {
            return Err(Error::Config("tune.trials must be positive".into()));
        }
        Ok(())
    }

    /// The granularity map: from the dataset's mapping file when given,
    /// otherwise the built-in maps.
    pub fn granularity_map(&self, dataset: Option<&Dataset>) -> Result<GranularityMap> {
        let builtin;
        let file = match dataset {
            Some(d) => &d.granularity,
            None => {
                builtin = GranularityFile::builtin();
                &builtin
            }
        };
        let map = file.get(&self.granularity)?.clone();
        if let Some(bg) = self.prompts.background_class {
            if bg >= map.num_classes() {
                return Err(Error::Config(format!(
                    "background class {bg} but granularity {} has {} classes",
                    map.name,
                    map.num_classes()
                )));
            }
        }
        Ok(map)
    }

    pub fn backend_options(&self) -> BackendOptions {
        BackendOptions {
            seed: self.seed,
            color_keys: self.backend.color_keys.clone(),
            logit_magnitude: self.backend.logit_magnitude,
            logit_noise: self.backend.logit_noise,
            color_tolerance: self.backend.color_tolerance,
            region_tolerance: self.backend.region_tolerance,
            ..BackendOptions::default()
        }
    }

    pub fn build_backends(&self, registry: &BackendRegistry) -> Result<Backends> {
        registry.build(
            &self.backend.detector,
            &self.backend.logits,
            &self.backend.segmenter,
            &self.backend_options(),
        )
    }

    pub fn graph_pipeline(&self, backends: Backends) -> GraphPipeline {
        GraphPipeline {
            backends,
            detector: self.detector.clone(),
            prompts: self.text_prompts.clone(),
            graph: self.graph.clone(),
        }
    }

    /// Training settings with the job seed folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: crate::rng::derive_str(self.seed, "train", &[self.train.seed]),
            ..self.train.clone()
        }
    }
}
