use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

/// Written next to the outputs of every file-producing command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_paths: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    /// Effective flag values.
    pub settings: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_paths: vec![],
            seed: None,
            outputs: vec![],
            settings: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.settings.insert(key.to_string(), value.to_string());
        self
    }

    pub fn write_next_to(&self, primary: &Path) -> anyhow::Result<PathBuf> {
        let path = sibling(primary, "manifest");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// `dir/name.ext` → `dir/name.<tag>.json`
pub fn sibling(primary: &Path, tag: &str) -> PathBuf {
    let stem = primary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    primary.with_file_name(format!("{stem}.{tag}.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("a/model.json"), "selection"), PathBuf::from("a/model.selection.json"));
        assert_eq!(sibling(Path::new("data.csv"), "manifest"), PathBuf::from("data.manifest.json"));
    }
}
