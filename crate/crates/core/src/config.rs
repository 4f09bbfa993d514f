//! JSON run configuration and backend construction.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::backends::mock::{Lexicon, LexiconClassifier, MockGenerator};
use crate::backends::{
    BackendPolicy, EmotionClassifier, HttpClassifier, OllamaClient, ResponseFormat, TextGenerator,
};
use crate::domain::{ObjectivePair, Prompt, DEFAULT_PROMPT_MAX_CHARS};
use crate::moea::{Selector, SubsetMode};
use crate::runner::{RunConfig, DEFAULT_SEED_PROMPTS};
use crate::variation::{RequestDefaults, TemplateSet};

pub const ENV_LLM_URL: &str = "EMO_LLM_URL";
pub const ENV_CLASSIFIER_URL: &str = "EMO_CLF_URL";
pub const ENV_CLASSIFIER_TOKEN: &str = "EMO_CLF_TOKEN";

pub type BackendHandles = (Box<dyn TextGenerator>, Box<dyn EmotionClassifier>);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Live,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mock" => Ok(BackendKind::Mock),
            "live" => Ok(BackendKind::Live),
            other => Err(format!("unknown backend `{other}` (expected mock or live)")),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub context_window: u32,
    pub max_output_tokens: u32,
    pub stop: Vec<String>,
    pub forward_seed: bool,
    pub policy: BackendPolicy,
}

impl Default for LlmSettings {
    fn default() -> Self {
        let r = RequestDefaults::default();
        LlmSettings {
            base_url: "http://localhost:11434".into(),
            model: r.model_name,
            temperature: r.temperature,
            context_window: r.context_window,
            max_output_tokens: r.max_output_tokens,
            stop: r.stop_sequences,
            forward_seed: false,
            policy: BackendPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSettings {
    pub base_url: String,
    pub token: Option<String>,
    pub response_format: ResponseFormat,
    pub request_all_scores: bool,
    pub policy: BackendPolicy,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        ClassifierSettings {
            base_url: "http://localhost:8080/classify".into(),
            token: None,
            response_format: ResponseFormat::Auto,
            request_all_scores: true,
            policy: BackendPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSettings {
    pub seed: u64,
    pub lexicon_file: Option<PathBuf>,
}

/// On-disk configuration. Every key is optional.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub mu: usize,
    pub lambda: usize,
    pub generations: usize,
    pub repetitions: usize,
    pub pair: ObjectivePair,
    pub selector: Selector,
    pub hv_mode: SubsetMode,
    pub seed: u64,
    pub seed_prompts: Vec<String>,
    pub prompt_max_chars: usize,
    pub output_dir: PathBuf,
    pub templates_file: Option<PathBuf>,
    pub backend: BackendKind,
    pub llm: LlmSettings,
    pub classifier: ClassifierSettings,
    pub mock: MockSettings,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            mu: 10,
            lambda: 20,
            generations: 30,
            repetitions: 10,
            pair: "love:anger".parse().expect("valid default pair"),
            selector: Selector::Nsga2,
            hv_mode: SubsetMode::Greedy,
            seed: 0,
            seed_prompts: DEFAULT_SEED_PROMPTS.iter().map(|s| s.to_string()).collect(),
            prompt_max_chars: DEFAULT_PROMPT_MAX_CHARS,
            output_dir: PathBuf::from("runs"),
            templates_file: None,
            backend: BackendKind::Mock,
            llm: LlmSettings::default(),
            classifier: ClassifierSettings::default(),
            mock: MockSettings::default(),
        }
    }
}

impl FileConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Applies `EMO_LLM_URL`, `EMO_CLF_URL` and `EMO_CLF_TOKEN` when set.
    pub fn apply_env(&mut self) {
        if let Ok(url) = env::var(ENV_LLM_URL) {
            self.llm.base_url = url;
        }
        if let Ok(url) = env::var(ENV_CLASSIFIER_URL) {
            self.classifier.base_url = url;
        }
        if let Ok(token) = env::var(ENV_CLASSIFIER_TOKEN) {
            self.classifier.token = Some(token);
        }
    }

    pub fn run_config(&self) -> Result<RunConfig, ConfigError> {
        let seed_prompts = self
            .seed_prompts
            .iter()
            .map(|p| Prompt::with_limit(p.as_str(), self.prompt_max_chars))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ConfigError::Invalid(format!("seed prompt: {e}")))?;
        let templates = match &self.templates_file {
            Some(path) => TemplateSet::load(path).map_err(|e| ConfigError::Read {
                path: path.clone(),
                message: e.to_string(),
            })?,
            None => TemplateSet::default(),
        };
        let config = RunConfig {
            mu: self.mu,
            lambda: self.lambda,
            generations: self.generations,
            repetitions: self.repetitions,
            pair: self.pair,
            selector: self.selector,
            hv_mode: self.hv_mode,
            seed: self.seed,
            seed_prompts,
            prompt_max_chars: self.prompt_max_chars,
            request: RequestDefaults {
                model_name: self.llm.model.clone(),
                temperature: self.llm.temperature,
                context_window: self.llm.context_window,
                max_output_tokens: self.llm.max_output_tokens,
                stop_sequences: self.llm.stop.clone(),
            },
            templates,
            output_dir: self.output_dir.clone(),
        };
        config
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(config)
    }

    pub fn build_backends(&self) -> Result<BackendHandles, ConfigError> {
        match self.backend {
            BackendKind::Mock => {
                let lexicon = match &self.mock.lexicon_file {
                    Some(path) => Lexicon::load(path).map_err(|e| ConfigError::Read {
                        path: path.clone(),
                        message: e.to_string(),
                    })?,
                    None => Lexicon::default(),
                };
                let vocabulary = lexicon.all_keywords();
                Ok((
                    Box::new(MockGenerator::new(self.mock.seed).with_vocabulary(vocabulary)),
                    Box::new(LexiconClassifier::new(lexicon)),
                ))
            }
            BackendKind::Live => Ok((
                Box::new(
                    OllamaClient::new(&self.llm.base_url, self.llm.policy.clone())
                        .forward_seed(self.llm.forward_seed),
                ),
                Box::new(
                    HttpClassifier::new(&self.classifier.base_url, self.classifier.policy.clone())
                        .with_token(self.classifier.token.clone())
                        .with_format(self.classifier.response_format)
                        .request_all_scores(self.classifier.request_all_scores),
                ),
            )),
        }
    }
}
