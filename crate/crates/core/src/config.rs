//! Build configs from JSON or TOML files, and seed resolution.

use std::path::Path;

use crate::construction::BuildConfig;
use crate::error::{Error, Result};

/// Environment variable that overrides the config seed.
pub const SEED_ENV: &str = "RSF_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Toml,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(Format::Json),
            Some("toml") => Ok(Format::Toml),
            _ => Err(Error::Config(format!(
                "{}: config must end in .json or .toml",
                path.display()
            ))),
        }
    }
}

/// Parses and validates a config.
pub fn parse_config(text: &str, format: Format) -> Result<BuildConfig> {
    let config: BuildConfig = match format {
        Format::Json => serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
        Format::Toml => toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<BuildConfig> {
    let format = Format::from_path(path)?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text, format).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Flag beats environment, environment beats config.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config_seed: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        None => Ok(config_seed),
    }
}
