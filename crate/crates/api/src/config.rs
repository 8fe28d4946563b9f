use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use segrate_core::rating::DEFAULT_RATERS_PER_VIDEO;

/// Server settings, usually read from a JSON file.
///
/// ```json
/// {
///   "bind": "127.0.0.1:8080",
///   "data_dir": "data",
///   "catalog_path": null,
///   "rating_form_path": null,
///   "raters_per_video": 2,
///   "raters": ["clin1", "clin2", "clin3"],
///   "tokens": { "tok-seg1": "seg1", "tok-clin1": "clin1" }
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    pub data_dir: PathBuf,
    /// Defaults to the built-in catalog.
    #[serde(default)]
    pub catalog_path: Option<PathBuf>,
    /// Defaults to the built-in form.
    #[serde(default)]
    pub rating_form_path: Option<PathBuf>,
    #[serde(default = "default_raters_per_video")]
    pub raters_per_video: usize,
    /// Rater pool used for assignments.
    #[serde(default)]
    pub raters: Vec<String>,
    /// Token to actor id.
    #[serde(default)]
    pub tokens: BTreeMap<String, String>,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_raters_per_video() -> usize {
    DEFAULT_RATERS_PER_VIDEO
}

impl ServerConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            bind: default_bind(),
            data_dir: data_dir.into(),
            catalog_path: None,
            rating_form_path: None,
            raters_per_video: DEFAULT_RATERS_PER_VIDEO,
            raters: Vec::new(),
            tokens: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
