//! Small output helpers shared by the commands.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Adds the run seed as a top-level `seed` field of a JSON document.
pub fn stamp_seed(json_text: &str, seed: u64) -> Result<String> {
    let mut doc: serde_json::Value =
        serde_json::from_str(json_text).context("re-parsing result JSON")?;
    doc["seed"] = seed.into();
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

/// CSV cell for an optional value; empty when the value is unavailable.
pub fn cell(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}
