//! Run configuration: TOML file values with command-line overrides on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use untangle_core::consultation::ConsultationConfig;
use untangle_core::llm::LlmConfig;
use untangle_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    /// Canned replies from `--script`.
    Scripted,
    /// OpenAI-compatible chat-completions endpoint.
    Http,
    /// Replays the bundle's gold labels.
    Oracle,
    /// Puts every statement into one concern.
    SingleCluster,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub backend: Option<BackendKind>,
    pub max_rounds: Option<u32>,
    pub include_comments: Option<bool>,
    pub parallelism: Option<usize>,
    pub allow_concurrent_validation: Option<bool>,
    pub script: Option<PathBuf>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub run: RunSection,
    pub llm: LlmConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Flag values; `None` keeps the config file's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub backend: Option<BackendKind>,
    pub max_rounds: Option<u32>,
    pub no_comments: bool,
    pub model: Option<String>,
    pub parallelism: Option<usize>,
    pub script: Option<PathBuf>,
    pub concurrent_validation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub backend: BackendKind,
    pub consultation: ConsultationConfig,
    pub include_comments: bool,
    pub parallelism: usize,
    pub script: Option<PathBuf>,
    pub llm: LlmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Http,
            consultation: ConsultationConfig::default(),
            include_comments: true,
            parallelism: 1,
            script: None,
            llm: LlmConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn with_backend(backend: BackendKind) -> Self {
        Self {
            backend,
            ..Self::default()
        }
    }

    pub fn resolve(file: Option<FileConfig>, flags: &Overrides) -> Result<Self> {
        let file = file.unwrap_or_default();
        let run = file.run;
        let mut llm = file.llm;
        if let Some(model) = &flags.model {
            llm.model = model.clone();
        }
        let defaults = ConsultationConfig::default();
        let cfg = Self {
            backend: flags.backend.or(run.backend).unwrap_or(BackendKind::Http),
            consultation: ConsultationConfig {
                max_rounds: flags.max_rounds.or(run.max_rounds).unwrap_or(defaults.max_rounds),
                allow_concurrent_validation: flags.concurrent_validation
                    || run.allow_concurrent_validation.unwrap_or(defaults.allow_concurrent_validation),
            },
            include_comments: !flags.no_comments && run.include_comments.unwrap_or(true),
            parallelism: flags.parallelism.or(run.parallelism).unwrap_or(1),
            script: flags.script.clone().or(run.script),
            llm,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.consultation.validate()?;
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        match self.backend {
            BackendKind::Scripted if self.script.is_none() => {
                Err(Error::Config("the scripted backend needs a --script file".into()))
            }
            BackendKind::Http => self.llm.validate(),
            _ => Ok(()),
        }
    }
}
