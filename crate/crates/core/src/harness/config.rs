use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{ClientSettings, Mode, RetryPolicy, Service};
use crate::graph::GraphConfig;
use crate::stats::Grouping;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub paths: Paths,
    pub clients: ClientsConfig,
    pub scene_graph: GraphConfig,
    pub graph_qa: QaConfig,
    pub pipeline: PipelineConfig,
    pub simulate: SimulateConfig,
}

/// Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// JSONL `{id, text}` or one prompt per line.
    pub prompts: Option<PathBuf>,
    /// JSONL `{image_id, prompt_id, model_name, path}`.
    pub manifest: Option<PathBuf>,
    /// Alternative to a manifest: `{dir}/{model}/{prompt_id}[__suffix].{png,jpg,json}`.
    pub images: Option<PathBuf>,
    pub human_scores: Option<PathBuf>,
    pub gold_labels: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    /// Replacement lexicon tables (same file names as the bundled ones).
    pub data: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            prompts: None,
            manifest: None,
            images: None,
            human_scores: None,
            gold_labels: None,
            fixtures: Some(PathBuf::from("fixtures")),
            data: None,
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientsConfig {
    pub mode: Mode,
    pub timeout_secs: f64,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    /// Endpoint overrides; otherwise `HALLU_{SERVICE}_URL`.
    pub detect_url: Option<String>,
    pub vqa_url: Option<String>,
    pub chat_url: Option<String>,
    pub caption_url: Option<String>,
}

impl Default for ClientsConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Replay,
            timeout_secs: 60.0,
            max_in_flight: 4,
            max_retries: 3,
            backoff_ms: 250,
            detect_url: None,
            vqa_url: None,
            chat_url: None,
            caption_url: None,
        }
    }
}

impl ClientsConfig {
    pub fn settings(&self, service: Service) -> ClientSettings {
        let url = match service {
            Service::Detect => &self.detect_url,
            Service::Vqa => &self.vqa_url,
            Service::Chat => &self.chat_url,
            Service::Caption => &self.caption_url,
        };
        ClientSettings {
            mode: self.mode,
            url: url.clone(),
            timeout: Duration::from_secs_f64(self.timeout_secs),
            max_in_flight: self.max_in_flight,
            retry: RetryPolicy {
                max_retries: self.max_retries,
                base_backoff: Duration::from_millis(self.backoff_ms),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoder {
    Deterministic,
    Chat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knowledge {
    Graph,
    Captions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionText {
    Template,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QaConfig {
    pub decoder: Decoder,
    pub knowledge: Knowledge,
    pub questions: QuestionText,
    pub fuzzy_threshold: f64,
}

impl Default for QaConfig {
    fn default() -> Self {
        Self {
            decoder: Decoder::Deterministic,
            knowledge: Knowledge::Graph,
            questions: QuestionText::Template,
            fuzzy_threshold: crate::lexicon::DEFAULT_FUZZY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub workers: usize,
    pub grouping: Grouping,
    /// Also write each image's graph and QA results next to its report.
    pub write_details: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { workers: 4, grouping: Grouping::Pooled, write_details: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    /// Per-site corruption probabilities, one synthetic model each.
    pub rates: Vec<f64>,
    /// Images per prompt per synthetic model.
    pub replicas: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { seed: 17, rates: vec![0.0, 0.1, 0.3], replicas: 2 }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            paths: Paths::default(),
            clients: ClientsConfig::default(),
            scene_graph: GraphConfig::default(),
            graph_qa: QaConfig::default(),
            pipeline: PipelineConfig::default(),
            simulate: SimulateConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Invalid(m) => ConfigError::Read { path: path.to_path_buf(), message: m },
            other => other,
        })?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let ps = &mut self.paths;
        for p in [
            &mut ps.prompts,
            &mut ps.manifest,
            &mut ps.images,
            &mut ps.human_scores,
            &mut ps.gold_labels,
            &mut ps.fixtures,
            &mut ps.data,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut ps.output);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        self.scene_graph.validate().map_err(ConfigError::Invalid)?;
        let t = self.graph_qa.fuzzy_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return bad(format!("graph_qa.fuzzy_threshold = {t} is outside (0, 1]"));
        }
        if self.pipeline.workers == 0 {
            return bad("pipeline.workers must be at least 1".into());
        }
        let c = &self.clients;
        if !(c.timeout_secs.is_finite() && c.timeout_secs > 0.0) {
            return bad(format!("clients.timeout_secs = {} must be positive", c.timeout_secs));
        }
        if c.max_in_flight == 0 {
            return bad("clients.max_in_flight must be at least 1".into());
        }
        if c.mode != Mode::Live && self.paths.fixtures.is_none() {
            return bad(format!("clients.mode = {:?} needs paths.fixtures", c.mode).to_lowercase());
        }
        if self.paths.manifest.is_some() && self.paths.images.is_some() {
            return bad("set only one of paths.manifest and paths.images".into());
        }
        if self.simulate.rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("simulate.rates must lie in [0, 1]".into());
        }
        if self.simulate.replicas == 0 {
            return bad("simulate.replicas must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        assert!(text.contains("[scene_graph]"));
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        let mut no_fixtures = RunConfig::default();
        no_fixtures.paths.fixtures = None;
        assert!(no_fixtures.validate().is_err());
        no_fixtures.clients.mode = Mode::Live;
        assert!(no_fixtures.validate().is_ok());
        let ok = "[paths]\nfixtures = \"fx\"\n";
        assert!(RunConfig::from_toml(ok).is_ok());
        assert!(RunConfig::from_toml(&format!("{ok}[scene_graph]\nnear_frac = 2.0\n")).is_err());
        assert!(RunConfig::from_toml(&format!("{ok}[pipeline]\nworkers = 0\n")).is_err());
        assert!(RunConfig::from_toml(&format!("{ok}[pipeline]\nwidth = 3\n")).is_err());
        assert!(RunConfig::from_toml("version = 2\n[paths]\nfixtures = \"fx\"\n").is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let mut cfg = RunConfig::from_toml("[paths]\nfixtures = \"fx\"\noutput = \"/abs/out\"\n").unwrap();
        cfg.resolve_paths(Path::new("/etc/demo"));
        assert_eq!(cfg.paths.fixtures.unwrap(), Path::new("/etc/demo/fx"));
        assert_eq!(cfg.paths.output, Path::new("/abs/out"));
    }
}
