//! `key=value` service configuration.

use std::fs;
use std::path::{Path, PathBuf};

use heatdispatch_core::command::DEFAULT_TTL_SECS;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    pub command_ttl_s: u64,
    /// When set, every request must carry this token.
    pub auth_token: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8080".to_owned(),
            data_dir: PathBuf::from("data"),
            command_ttl_s: DEFAULT_TTL_SECS,
            auth_token: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Blank lines and `#` comments are ignored; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = ServiceConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "listen" => config.listen = value.to_owned(),
                "data_dir" => config.data_dir = PathBuf::from(value),
                "command_ttl_s" => {
                    config.command_ttl_s = value
                        .parse()
                        .ok()
                        .filter(|&ttl| ttl > 0)
                        .ok_or_else(|| syntax(format!("command_ttl_s must be a positive integer, got {value:?}")))?
                }
                "auth_token" => config.auth_token = (!value.is_empty()).then(|| value.to_owned()),
                other => return Err(syntax(format!("unknown key {other:?}"))),
            }
        }
        Ok(config)
    }
}
