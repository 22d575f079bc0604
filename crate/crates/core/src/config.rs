//! Application configuration: a key=value text file, environment-variable
//! overrides, validated at startup. Command-line flags beat the
//! environment, which beats the file.

use crate::probe;
use crate::report::Thresholds;
use std::path::Path;
use thiserror::Error;

pub const ENV_API_KEY: &str = "PAGESPEED_API_KEY";
pub const ENV_CONFIG: &str = "AUDIT_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {reason}")]
    BadValue { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct AppConfig {
    pub timeout_s: u64,
    pub parallelism: usize,
    pub pagespeed_endpoint: String,
    pub pagespeed_api_key: Option<String>,
    pub optimization_audit: String,
    pub format_audit: String,
    pub seed: u64,
    pub thresholds: Thresholds,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            timeout_s: probe::DEFAULT_TIMEOUT_S,
            parallelism: probe::DEFAULT_PARALLELISM,
            pagespeed_endpoint: probe::DEFAULT_PAGESPEED_ENDPOINT.to_owned(),
            pagespeed_api_key: None,
            optimization_audit: probe::DEFAULT_OPTIMIZATION_AUDIT.to_owned(),
            format_audit: probe::DEFAULT_FORMAT_AUDIT.to_owned(),
            seed: 0,
            thresholds: Thresholds::default(),
        }
    }
}

impl AppConfig {
    /// Parse `key = value` lines; `#` starts a comment. Unknown keys are
    /// rejected.
    pub fn from_str(text: &str) -> Result<AppConfig, ConfigError> {
        let mut config = AppConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::BadValue {
                line,
                reason: format!("expected key = value, got {content:?}"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let parse_num = |what: &str| -> Result<f64, ConfigError> {
                value.parse().map_err(|_| ConfigError::BadValue {
                    line,
                    reason: format!("{what} must be a number, got {value:?}"),
                })
            };
            match key {
                "timeout_s" => config.timeout_s = parse_num("timeout_s")? as u64,
                "parallelism" => {
                    let p = parse_num("parallelism")? as usize;
                    if p == 0 {
                        return Err(ConfigError::BadValue {
                            line,
                            reason: "parallelism must be at least 1".into(),
                        });
                    }
                    config.parallelism = p;
                }
                "pagespeed_endpoint" => config.pagespeed_endpoint = value.to_owned(),
                "pagespeed_api_key" => config.pagespeed_api_key = Some(value.to_owned()),
                "optimization_audit" => config.optimization_audit = value.to_owned(),
                "format_audit" => config.format_audit = value.to_owned(),
                "seed" => config.seed = parse_num("seed")? as u64,
                "load_warn_s" => config.thresholds.load_warn_s = parse_num("load_warn_s")?,
                "load_critical_s" => {
                    config.thresholds.load_critical_s = parse_num("load_critical_s")?
                }
                other => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: other.to_owned(),
                    })
                }
            }
        }
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<AppConfig, ConfigError> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    /// Start from the file named by AUDIT_CONFIG (if set), then apply
    /// environment overrides.
    pub fn from_env() -> Result<AppConfig, ConfigError> {
        let mut config = match std::env::var(ENV_CONFIG) {
            Ok(path) if !path.is_empty() => Self::from_file(path)?,
            _ => AppConfig::default(),
        };
        if let Ok(key) = std::env::var(ENV_API_KEY) {
            if !key.is_empty() {
                config.pagespeed_api_key = Some(key);
            }
        }
        Ok(config)
    }
}
