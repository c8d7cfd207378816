//! `key = value` configuration files.

use std::fmt::Write as _;
use std::path::Path;

use disent_core::TrainConfig;

use crate::error::{io_err, Error, Result};

/// Parses config text over the defaults and validates the result.
pub fn parse_config(text: &str) -> Result<TrainConfig> {
    let mut config = TrainConfig::default();
    let mut seen = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |key: &str, message: String| Error::Parse {
            line: i + 1,
            key: key.into(),
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(line, "expected `key = value`".into()))?;
        let (key, value) = (key.trim(), value.trim());
        if seen.contains(&key) {
            return Err(parse_err(key, "duplicate key".into()));
        }
        seen.push(key);
        config.set(key, value).map_err(|e| match e {
            disent_core::Error::Config { message, .. } => parse_err(key, message),
            other => parse_err(key, other.to_string()),
        })?;
    }
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text)
}

/// Applies `key=value` overrides in order.
pub fn apply_overrides(config: &mut TrainConfig, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--set expects key=value, got `{item}`")))?;
        config.set(k.trim(), v.trim())?;
    }
    config.validate()?;
    Ok(())
}

/// Every field, one `key = value` line each; parses back to the same config.
pub fn render_config(config: &TrainConfig) -> String {
    let mut out = String::new();
    for (k, v) in config.entries() {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}
