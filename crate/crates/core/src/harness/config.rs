//! Config files: a flat key/value document, either JSON (`.json` or a body
//! starting with `{`) or TOML. Unknown keys are rejected and every key is
//! optional, falling back to [`TrainConfig::default`].

use std::path::Path;

use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

pub fn parse_config_str(text: &str, json: bool) -> Result<TrainConfig> {
    let trimmed = text.trim();
    let cfg: TrainConfig = if trimmed.is_empty() {
        TrainConfig::default()
    } else if json || trimmed.starts_with('{') {
        serde_json::from_str(trimmed).map_err(|e| Error::Config(e.to_string()))?
    } else {
        toml::from_str(trimmed).map_err(|e| Error::Config(e.to_string()))?
    };
    cfg.resolve()
}

pub fn parse_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let json = path.extension().is_some_and(|e| e == "json");
    parse_config_str(&text, json).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Effective configuration as pretty JSON; parsing it back yields the same config.
pub fn emit_config(cfg: &TrainConfig) -> Result<String> {
    Ok(serde_json::to_string_pretty(cfg)?)
}
