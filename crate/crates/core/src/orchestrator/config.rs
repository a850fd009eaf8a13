//! Campaign configuration: a TOML or JSON file, then environment
//! overrides, then `key=value` overrides, in increasing precedence.

use super::{CancelToken, OptimizationMode, OrchestratorError, Pipeline, SearchSettings};
use crate::corpus::{load_manifest, CorpusError, Manifest, ManifestEntry};
use crate::encoders::{CachedBackend, EncodeBackend, ProcessBackend, ProcessBackendConfig, ProxyProfile, SyntheticBackend};
use crate::rdmodel::SyntheticClipModel;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

pub const ENV_SCRATCH: &str = "LFORGE_SCRATCH";
pub const ENV_JOBS: &str = "LFORGE_JOBS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("bad override {0:?}: expected key=value")]
    BadOverride(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Synthetic { models: Vec<SyntheticClipModel> },
    Process(ProcessBackendConfig),
}

fn default_modes() -> Vec<OptimizationMode> {
    use OptimizationMode::*;
    vec![AllFrames, Kf, GfArf, KfGfArf, PowellKfXGfArf]
}

fn default_scratch() -> PathBuf {
    PathBuf::from("lforge-scratch")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    /// Corpus manifest file; clips may also be listed inline.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub clips: Vec<ManifestEntry>,
    pub backend: BackendConfig,
    pub search_profile: ProxyProfile,
    /// Defaults to the search profile.
    #[serde(default)]
    pub final_profile: Option<ProxyProfile>,
    #[serde(default = "default_modes")]
    pub modes: Vec<OptimizationMode>,
    #[serde(default)]
    pub search: SearchSettings,
    /// Worker pool size; all cores when absent.
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default = "default_scratch")]
    pub scratch_dir: PathBuf,
    /// Results store; `<scratch_dir>/results.jsonl` when absent.
    #[serde(default)]
    pub store: Option<PathBuf>,
    /// Encode cache; `<scratch_dir>/cache` when absent.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Report outputs; `<scratch_dir>/reports` when absent.
    #[serde(default)]
    pub report_dir: Option<PathBuf>,
}

/// Path-valued keys that are resolved against the config file's directory.
const PATH_KEYS: &[&[&str]] = &[
    &["manifest"],
    &["scratch_dir"],
    &["store"],
    &["cache_dir"],
    &["report_dir"],
    &["backend", "proxy_dir"],
];

fn resolve_relative(v: &mut Value, base: &Path) {
    let fix = |slot: &mut Value| {
        if let Some(s) = slot.as_str() {
            let p = Path::new(s);
            if p.is_relative() {
                *slot = Value::String(base.join(p).to_string_lossy().into_owned());
            }
        }
    };
    for keys in PATH_KEYS {
        let mut cur = Some(&mut *v);
        for k in *keys {
            cur = cur.and_then(|c| c.get_mut(*k));
        }
        if let Some(slot) = cur {
            fix(slot);
        }
    }
    if let Some(clips) = v.get_mut("clips").and_then(Value::as_array_mut) {
        for c in clips {
            if let Some(slot) = c.get_mut("path") {
                fix(slot);
            }
        }
    }
}

/// Parses an override value: JSON when it parses (numbers, booleans,
/// arrays, quoted strings), a bare string otherwise.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies one `dotted.key=value` override to a raw config tree.
/// `mode=X` is shorthand for `modes=["X"]`.
pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .filter(|(k, _)| !k.trim().is_empty())
        .ok_or_else(|| ConfigError::BadOverride(assignment.to_string()))?;
    let key = key.trim();
    let (key, value) = if key == "mode" {
        ("modes", Value::Array(vec![Value::String(raw.to_string())]))
    } else {
        (key, parse_value(raw))
    };
    let mut cur = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            return Err(ConfigError::BadOverride(assignment.to_string()));
        }
        let obj = cur.as_object_mut().expect("checked above");
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

fn read_tree(path: &Path) -> Result<Value, ConfigError> {
    let err = |reason: String| ConfigError::Read {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let mut tree: Value = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))?
    } else {
        let t: toml::Value = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
        serde_json::to_value(t).map_err(|e| err(e.to_string()))?
    };
    if !tree.is_object() {
        return Err(err("top level must be a table".into()));
    }
    resolve_relative(&mut tree, path.parent().unwrap_or(Path::new(".")));
    Ok(tree)
}

impl CampaignConfig {
    /// Loads `path` (if any), then applies `LFORGE_SCRATCH` / `LFORGE_JOBS`
    /// as looked up through `env`, then each `key=value` in `overrides`.
    pub fn load(
        path: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
        overrides: &[String],
    ) -> Result<Self, ConfigError> {
        let mut tree = match path {
            Some(p) => read_tree(p)?,
            None => Value::Object(Default::default()),
        };
        if let Some(s) = env(ENV_SCRATCH) {
            tree["scratch_dir"] = Value::String(s);
        }
        if let Some(j) = env(ENV_JOBS) {
            let n: usize = j
                .trim()
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{ENV_JOBS}={j:?} is not a positive integer")))?;
            tree["jobs"] = Value::from(n);
        }
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: CampaignConfig = serde_json::from_value(tree).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.search.validate()?;
        if self.modes.is_empty() {
            return Err(ConfigError::Invalid("no optimization modes selected".into()));
        }
        if self.jobs == Some(0) {
            return Err(ConfigError::Invalid("jobs must be positive".into()));
        }
        Ok(())
    }

    pub fn final_profile(&self) -> &ProxyProfile {
        self.final_profile.as_ref().unwrap_or(&self.search_profile)
    }

    pub fn store_path(&self) -> PathBuf {
        self.store.clone().unwrap_or_else(|| self.scratch_dir.join("results.jsonl"))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.scratch_dir.join("cache"))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.report_dir.clone().unwrap_or_else(|| self.scratch_dir.join("reports"))
    }

    /// Manifest clips followed by inline clips.
    pub fn clips(&self) -> Result<Vec<ManifestEntry>, ConfigError> {
        let mut clips = match &self.manifest {
            Some(p) => load_manifest(p)?.clips,
            None => Vec::new(),
        };
        clips.extend(self.clips.iter().cloned());
        Manifest { clips: clips.clone() }.validate()?;
        Ok(clips)
    }

    /// The configured backend behind a persistent encode cache.
    pub fn build_backend(&self) -> Result<Arc<dyn EncodeBackend>, ConfigError> {
        let dir = self.cache_dir();
        Ok(match &self.backend {
            BackendConfig::Synthetic { models } => {
                Arc::new(CachedBackend::persistent(SyntheticBackend::new(models.iter().cloned()), dir)?)
            }
            BackendConfig::Process(p) => Arc::new(CachedBackend::persistent(ProcessBackend::new(p.clone()), dir)?),
        })
    }

    pub fn pipeline(&self, cancel: CancelToken) -> Result<Pipeline, ConfigError> {
        Ok(Pipeline::new(self.build_backend()?, self.search.clone(), &self.scratch_dir, self.jobs)?.with_cancel(cancel))
    }
}
