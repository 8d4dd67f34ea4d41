//! Run configuration: one TOML file covering every pipeline stage.
//!
//! Secrets never live here; the endpoint key is read from the environment
//! variable named in `[endpoint]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use zner_core::chunking::DEFAULT_WINDOW_WORDS;
use zner_core::curation::CurationConfig;
use zner_core::evaluation::{MatchPolicy, SpanNormalize};
use zner_core::llm::EndpointConfig;
use zner_core::prompting::TemplateVariant;

use crate::error::{CliError, ErrorKind};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn default_window_words() -> usize {
    DEFAULT_WINDOW_WORDS
}
fn default_concurrency() -> usize {
    4
}
fn default_call_budget() -> usize {
    10_000
}
fn default_true() -> bool {
    true
}
fn default_normalize() -> SpanNormalize {
    SpanNormalize::TrimAndNfc
}
fn default_variant() -> TemplateVariant {
    TemplateVariant::WithDg
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChunkingConfig {
    #[serde(default = "default_window_words")]
    pub window_words: usize,
    #[serde(default)]
    pub overlap_words: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            window_words: default_window_words(),
            overlap_words: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceSettings {
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Planned call counts above this require `--yes`.
    #[serde(default = "default_call_budget")]
    pub call_budget: usize,
    #[serde(default = "default_variant")]
    pub template_variant: TemplateVariant,
    /// Content-addressed call cache directory; defaults to
    /// `<out_dir>/call_cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        Self {
            concurrency: default_concurrency(),
            call_budget: default_call_budget(),
            template_variant: default_variant(),
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSettings {
    #[serde(default = "default_true")]
    pub case_sensitive: bool,
    #[serde(default = "default_normalize")]
    pub normalize: SpanNormalize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            case_sensitive: true,
            normalize: default_normalize(),
        }
    }
}

impl EvalSettings {
    pub fn policy(&self) -> MatchPolicy {
        MatchPolicy {
            case_sensitive: self.case_sensitive,
            normalize: self.normalize,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub rng_seed: u64,
    /// Directory with template overrides (task_with_dg.txt,
    /// task_without_dg.txt, guideline_gen.txt); embedded defaults otherwise.
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
    #[serde(default)]
    pub curation: CurationConfig,
    #[serde(default)]
    pub endpoint: Option<EndpointConfig>,
    #[serde(default)]
    pub chunking: ChunkingConfig,
    #[serde(default)]
    pub inference: InferenceSettings,
    #[serde(default)]
    pub eval: EvalSettings,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::new(
                ErrorKind::Config,
                format!("cannot read config {}: {e}", path.display()),
            )
        })?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| {
            CliError::new(
                ErrorKind::Config,
                format!("invalid config {}: {e}", path.display()),
            )
        })?;
        config
            .curation
            .validate()
            .map_err(|e| CliError::new(ErrorKind::Config, e.to_string()))?;
        Ok(config)
    }

    /// Stable hash over the serialized config; stamped into output headers.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("serializable config");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex::encode(&hasher.finalize()[..8])
    }

    /// Header lines embedded in every output file: tool version, config
    /// hash and seed. Deliberately no timestamp, so identical runs produce
    /// byte-identical artifacts.
    pub fn header(&self) -> Vec<String> {
        vec![
            format!("zner v{TOOL_VERSION}"),
            format!("config_hash={}", self.hash()),
            format!("rng_seed={}", self.rng_seed),
        ]
    }

    pub fn endpoint(&self) -> Result<&EndpointConfig, CliError> {
        self.endpoint.as_ref().ok_or_else(|| {
            CliError::new(
                ErrorKind::Config,
                "config has no [endpoint] section (base_url, model)".to_string(),
            )
        })
    }
}

/// Loads a template body from the override directory or falls back to the
/// embedded default.
pub fn template_body(
    template_dir: Option<&Path>,
    file_name: &str,
    default: &str,
) -> Result<String, CliError> {
    match template_dir {
        Some(dir) => {
            let path = dir.join(file_name);
            if path.exists() {
                std::fs::read_to_string(&path).map_err(|e| {
                    CliError::new(
                        ErrorKind::Config,
                        format!("cannot read template {}: {e}", path.display()),
                    )
                })
            } else {
                Ok(default.to_string())
            }
        }
        None => Ok(default.to_string()),
    }
}
