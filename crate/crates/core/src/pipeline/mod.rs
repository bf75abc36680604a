//! End-to-end orchestration: ingest, embed, dynamics, project, cluster,
//! export. Communities are processed independently and in parallel; one
//! failing community does not stop the others.

mod config;
mod synth;

pub use config::{ArtifactConfig, InputConfig, PipelineConfig, ServerConfig};
pub use synth::{generate_synthetic_corpus, write_jsonl, TOPIC_A, TOPIC_B};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{artifact_file_name, build_artifact, write_artifact};
use crate::clustering::{dbscan, standardize_columns, ClusterSpace};
use crate::corpus::{load_corpus, Timeline};
use crate::dynamics::compute_dynamics;
use crate::embedding::{to_distribution, Distribution, EmbedderConfig};
use crate::hashing::stage_seed;
use crate::manifold::{l2_normalize_rows, tsne_embed, TsneParams, MIN_POINTS};

pub const REPORT_FILE: &str = "run-report.json";
pub const SKIP_TOO_FEW: &str = "too few points for projection";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("io error: {0}")]
    Io(String),
    #[error("community `{community}` failed at {stage}: {message}")]
    Stage {
        community: String,
        stage: &'static str,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommunityStatus {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityReport {
    pub community_id: String,
    pub status: CommunityStatus,
    pub reason: Option<String>,
    pub posts: usize,
    pub artifact: Option<PathBuf>,
    /// Wall-clock milliseconds per stage, keyed by stage name.
    pub stage_ms: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub communities: Vec<CommunityReport>,
    pub ingest_ms: u64,
    pub total_ms: u64,
}

impl RunReport {
    /// community id -> artifact path, for communities that were exported.
    pub fn artifacts(&self) -> BTreeMap<String, PathBuf> {
        self.communities
            .iter()
            .filter_map(|c| c.artifact.clone().map(|p| (c.community_id.clone(), p)))
            .collect()
    }

    pub fn has_failures(&self) -> bool {
        self.communities
            .iter()
            .any(|c| c.status == CommunityStatus::Failed)
    }
}

fn timed<T>(stage_ms: &mut BTreeMap<String, u64>, stage: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    stage_ms.insert(stage.to_owned(), start.elapsed().as_millis() as u64);
    out
}

fn stage_err<'a>(community: &'a str, stage: &'static str) -> impl Fn(String) -> PipelineError + 'a {
    move |message| PipelineError::Stage {
        community: community.to_owned(),
        stage,
        message,
    }
}

/// Runs every stage for one community and writes its artifact, recording
/// per-stage wall-clock milliseconds into `stage_ms`.
pub fn process_community(
    timeline: &Timeline,
    config: &PipelineConfig,
    stage_ms: &mut BTreeMap<String, u64>,
) -> Result<PathBuf, PipelineError> {
    let cid = timeline.community_id();
    let posts = timeline.posts();
    let n = posts.len();
    let file_name = artifact_file_name(cid).map_err(|e| stage_err(cid, "export")(e.to_string()))?;

    let embedder = EmbedderConfig {
        seed: stage_seed(config.seed, "embed", cid),
        ..config.embedder.clone()
    };
    let embeddings = timed(stage_ms, "embed", || {
        let texts: Vec<&str> = posts.iter().map(|p| p.body.as_str()).collect();
        crate::embedding::embed_batch(&texts, &embedder)
    });
    let embeddings = embeddings.map_err(|e| stage_err(cid, "embed")(e.to_string()))?;
    let dim = embedder.dimension;

    let dynamics = timed(stage_ms, "dynamics", || {
        let seq: Vec<(&str, Distribution)> = posts
            .iter()
            .zip(&embeddings)
            .map(|(p, e)| (p.post_id.as_str(), to_distribution(e, embedder.temperature)))
            .collect();
        compute_dynamics(&seq, &config.window)
    });
    let dynamics = dynamics.map_err(|e| stage_err(cid, "dynamics")(e.to_string()))?;

    let matrix = Array2::from_shape_vec(
        (n, dim),
        embeddings
            .iter()
            .flat_map(|e| e.values().iter().copied())
            .collect(),
    )
    .expect("every embedding has the configured dimension");

    let tsne_params = TsneParams {
        seed: stage_seed(config.seed, "tsne", cid),
        ..config.tsne.clone()
    };
    let projection = timed(stage_ms, "project", || {
        tsne_embed(matrix.view(), &tsne_params)
    })
    .map_err(|e| stage_err(cid, "project")(e.to_string()))?;
    let ids: Vec<&str> = posts.iter().map(|p| p.post_id.as_str()).collect();
    let coords = projection.points(&ids);

    let labels = timed(stage_ms, "cluster", || {
        let space = match config.dbscan.space {
            ClusterSpace::Projection2d => standardize_columns(projection.coords.view()),
            ClusterSpace::EmbeddingD => {
                let normalized = if config.tsne.normalize_input {
                    l2_normalize_rows(matrix.view())
                } else {
                    matrix.clone()
                };
                standardize_columns(normalized.view())
            }
        };
        dbscan(space.view(), &config.dbscan)
    });
    let labels = labels.map_err(|e| stage_err(cid, "cluster")(e.to_string()))?;

    let generated_at = config
        .artifact
        .generated_at
        .unwrap_or_else(|| posts.last().map_or(0, |p| p.timestamp));
    let path = config.output_dir.join(file_name);
    timed(stage_ms, "export", || {
        let artifact = build_artifact(
            timeline,
            &coords,
            &dynamics,
            &labels,
            config.window,
            config.artifact.bins,
            generated_at,
        )?;
        write_artifact(&artifact, &path)
    })
    .map_err(|e| stage_err(cid, "export")(e.to_string()))?;
    Ok(path)
}

fn run_one(timeline: &Timeline, config: &PipelineConfig) -> CommunityReport {
    let posts = timeline.len();
    let community_id = timeline.community_id().to_owned();
    if posts < MIN_POINTS {
        return CommunityReport {
            community_id,
            status: CommunityStatus::Skipped,
            reason: Some(SKIP_TOO_FEW.to_owned()),
            posts,
            artifact: None,
            stage_ms: BTreeMap::new(),
        };
    }
    let mut stage_ms = BTreeMap::new();
    let result = process_community(timeline, config, &mut stage_ms);
    match result {
        Ok(path) => CommunityReport {
            community_id,
            status: CommunityStatus::Ok,
            reason: None,
            posts,
            artifact: Some(path),
            stage_ms,
        },
        Err(e) => {
            log::error!("{e}");
            CommunityReport {
                community_id,
                status: CommunityStatus::Failed,
                reason: Some(e.to_string()),
                posts,
                artifact: None,
                stage_ms,
            }
        }
    }
}

/// Runs the whole pipeline and writes one artifact per community plus
/// `run-report.json` into the output directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let started = Instant::now();
    let corpus = load_corpus(&config.input.paths, config.input.format)?;
    let ingest_ms = started.elapsed().as_millis() as u64;

    fs::create_dir_all(&config.output_dir)
        .map_err(|e| PipelineError::Io(format!("{}: {e}", config.output_dir.display())))?;

    let selected: Vec<&Timeline> = match &config.communities {
        Some(allow) => corpus
            .values()
            .filter(|t| allow.iter().any(|a| a == t.community_id()))
            .collect(),
        None => corpus.values().collect(),
    };
    let mut communities: Vec<CommunityReport> =
        selected.par_iter().map(|t| run_one(t, config)).collect();
    if let Some(allow) = &config.communities {
        for missing in allow.iter().filter(|a| !corpus.contains_key(*a)) {
            communities.push(CommunityReport {
                community_id: missing.clone(),
                status: CommunityStatus::Skipped,
                reason: Some("not present in corpus".into()),
                posts: 0,
                artifact: None,
                stage_ms: BTreeMap::new(),
            });
        }
    }
    communities.sort_by(|a, b| a.community_id.cmp(&b.community_id));
    communities.dedup_by(|a, b| a.community_id == b.community_id);

    let report = RunReport {
        communities,
        ingest_ms,
        total_ms: started.elapsed().as_millis() as u64,
    };
    write_report(&report, &config.output_dir.join(REPORT_FILE))?;
    Ok(report)
}

fn write_report(report: &RunReport, path: &Path) -> Result<(), PipelineError> {
    let mut bytes =
        serde_json::to_vec_pretty(report).map_err(|e| PipelineError::Io(e.to_string()))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

impl PipelineError {
    /// Process exit code: 2 for configuration and usage errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::BadParams(_) => 2,
            _ => 1,
        }
    }
}
