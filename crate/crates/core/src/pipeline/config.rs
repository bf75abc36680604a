use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::artifact::{DEFAULT_BINS, DEFAULT_MAX_POINTS};
use crate::clustering::DbscanParams;
use crate::corpus::InputFormat;
use crate::dynamics::WindowConfig;
use crate::embedding::EmbedderConfig;
use crate::manifold::TsneParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub paths: Vec<PathBuf>,
    #[serde(default)]
    pub format: InputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactConfig {
    pub bins: usize,
    /// Value written to `generated_at`. Defaults to the community's latest
    /// post timestamp so reruns stay byte-identical.
    pub generated_at: Option<i64>,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            generated_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    /// Defaults to the pipeline's `output_dir`.
    pub artifact_dir: Option<PathBuf>,
    pub max_points: usize,
    pub cors_allowed_origin: String,
    /// Built dashboard bundle served at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            artifact_dir: None,
            max_points: DEFAULT_MAX_POINTS,
            cors_allowed_origin: "*".into(),
            static_dir: None,
        }
    }
}

/// Whole-run configuration, read from a TOML file.
///
/// The global `seed` derives every stage seed (embedding projection, t-SNE
/// initialization) per community; seeds given inside `[embedder]` or
/// `[tsne]` are ignored by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub communities: Option<Vec<String>>,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub tsne: TsneParams,
    #[serde(default)]
    pub dbscan: DbscanParams,
    #[serde(default)]
    pub artifact: ArtifactConfig,
    #[serde(default)]
    pub server: ServerConfig,
}

impl PipelineConfig {
    pub fn new(paths: Vec<PathBuf>, output_dir: PathBuf) -> Self {
        Self {
            seed: 0,
            output_dir,
            communities: None,
            input: InputConfig {
                paths,
                format: InputFormat::Jsonl,
            },
            embedder: EmbedderConfig::default(),
            window: WindowConfig::default(),
            tsne: TsneParams::default(),
            dbscan: DbscanParams::default(),
            artifact: ArtifactConfig::default(),
            server: ServerConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_relative_to(base);
        Ok(cfg)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.input.paths.iter_mut().for_each(fix);
        fix(&mut self.output_dir);
        if let Some(d) = self.server.artifact_dir.as_mut() {
            fix(d);
        }
        if let Some(d) = self.server.static_dir.as_mut() {
            fix(d);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |e: String| PipelineError::Config(e);
        if self.input.paths.is_empty() {
            return Err(cfg("input.paths must list at least one file".into()));
        }
        self.embedder.validate().map_err(|e| cfg(e.to_string()))?;
        if self.window.n == 0 {
            return Err(cfg("window.n must be >= 1".into()));
        }
        self.tsne.validate().map_err(|e| cfg(e.to_string()))?;
        self.dbscan.validate().map_err(|e| cfg(e.to_string()))?;
        if self.artifact.bins == 0 {
            return Err(cfg("artifact.bins must be >= 1".into()));
        }
        if self.server.max_points == 0 {
            return Err(cfg("server.max_points must be >= 1".into()));
        }
        Ok(())
    }

    pub fn artifact_dir(&self) -> PathBuf {
        self.server
            .artifact_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.clone())
    }
}
