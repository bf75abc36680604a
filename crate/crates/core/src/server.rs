//! Read-only HTTP API over exported artifacts.
//!
//! Artifacts load lazily and are cached per community; a cached entry is
//! replaced when the file's modification time changes, so communities can be
//! re-exported while the server runs.

use std::collections::HashMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::SystemTime;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

use crate::artifact::{
    artifact_file_name, downsample, read_artifact, ArtifactError, CommunityArtifact, Summaries,
    DEFAULT_BINS,
};
use crate::hashing::stage_seed;
use crate::pipeline::ServerConfig;

const ARTIFACT_PREFIX: &str = "artifact-";
const ARTIFACT_SUFFIX: &str = ".json";

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("unknown community `{0}`")]
    NotFound(String),
    #[error("bad range: from ({from}) > to ({to})")]
    BadRange { from: i64, to: i64 },
    #[error("bad query: {0}")]
    BadQuery(String),
    #[error("invalid bind address `{0}`")]
    InvalidBind(String),
    #[error("artifact directory {0} does not exist")]
    MissingArtifactDir(PathBuf),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl ServerError {
    pub fn status(&self) -> StatusCode {
        match self {
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::BadRange { .. } | Self::BadQuery(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServerError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunitySummary {
    pub community_id: String,
    pub total_posts: usize,
    pub time_min: Option<i64>,
    pub time_max: Option<i64>,
}

/// Optional time range and point budget for [`ArtifactStore::get_community`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommunityQuery {
    pub from: Option<i64>,
    pub to: Option<i64>,
    pub max_points: Option<usize>,
}

struct CachedArtifact {
    modified: SystemTime,
    artifact: Arc<CommunityArtifact>,
}

/// Lazily loading, mtime-invalidated cache over an artifact directory.
pub struct ArtifactStore {
    dir: PathBuf,
    max_points: usize,
    seed: u64,
    cache: RwLock<HashMap<String, CachedArtifact>>,
}

impl ArtifactStore {
    pub fn open(
        dir: impl Into<PathBuf>,
        max_points: usize,
        seed: u64,
    ) -> Result<Self, ServerError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(ServerError::MissingArtifactDir(dir));
        }
        Ok(Self {
            dir,
            max_points: max_points.max(1),
            seed,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn community_ids(&self) -> Result<Vec<String>, ServerError> {
        let mut ids: Vec<String> = fs::read_dir(&self.dir)?
            .filter_map(Result::ok)
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let id = name
                    .strip_prefix(ARTIFACT_PREFIX)?
                    .strip_suffix(ARTIFACT_SUFFIX)?;
                artifact_file_name(id).ok().map(|_| id.to_owned())
            })
            .collect();
        ids.sort();
        Ok(ids)
    }

    /// Cached artifact for `community_id`, reloaded when the file changed.
    pub fn load(&self, community_id: &str) -> Result<Arc<CommunityArtifact>, ServerError> {
        let name = artifact_file_name(community_id)
            .map_err(|_| ServerError::NotFound(community_id.to_owned()))?;
        let path = self.dir.join(name);
        let modified = match fs::metadata(&path) {
            Ok(m) if m.is_file() => m.modified()?,
            _ => return Err(ServerError::NotFound(community_id.to_owned())),
        };
        if let Some(hit) = self.cache.read().expect("cache lock").get(community_id) {
            if hit.modified == modified {
                return Ok(Arc::clone(&hit.artifact));
            }
        }
        let artifact = Arc::new(read_artifact(&path)?);
        self.cache.write().expect("cache lock").insert(
            community_id.to_owned(),
            CachedArtifact {
                modified,
                artifact: Arc::clone(&artifact),
            },
        );
        Ok(artifact)
    }

    /// One entry per artifact file, sorted by community id. Unreadable
    /// artifacts are logged and left out.
    pub fn list_communities(&self) -> Result<Vec<CommunitySummary>, ServerError> {
        let mut out = Vec::new();
        for id in self.community_ids()? {
            match self.load(&id) {
                Ok(a) => {
                    let range = a.time_range();
                    out.push(CommunitySummary {
                        community_id: a.community_id.clone(),
                        total_posts: a.total_posts,
                        time_min: range.map(|r| r.0),
                        time_max: range.map(|r| r.1),
                    });
                }
                Err(e) => log::warn!("skipping artifact for `{id}`: {e}"),
            }
        }
        Ok(out)
    }

    /// Records with `from <= timestamp <= to` (open where a bound is
    /// missing), downsampled to the point budget. Summaries describe the
    /// whole filtered set before downsampling.
    pub fn get_community(
        &self,
        community_id: &str,
        query: CommunityQuery,
    ) -> Result<CommunityArtifact, ServerError> {
        if let (Some(from), Some(to)) = (query.from, query.to) {
            if from > to {
                return Err(ServerError::BadRange { from, to });
            }
        }
        let artifact = self.load(community_id)?;
        let from = query.from.unwrap_or(i64::MIN);
        let to = query.to.unwrap_or(i64::MAX);
        let filtered: Vec<_> = artifact
            .records
            .iter()
            .filter(|r| from <= r.timestamp && r.timestamp <= to)
            .cloned()
            .collect();
        let bins = match artifact.summaries.bins() {
            0 => DEFAULT_BINS,
            b => b,
        };
        let summaries = Summaries::compute(&filtered, bins);
        let max_points = query.max_points.unwrap_or(self.max_points).max(1);
        let seed = stage_seed(self.seed, "downsample", community_id);
        let records = downsample(&filtered, max_points, seed);
        Ok(CommunityArtifact {
            schema_version: artifact.schema_version,
            community_id: artifact.community_id.clone(),
            generated_at: artifact.generated_at,
            window: artifact.window,
            total_posts: artifact.total_posts,
            records,
            summaries,
        })
    }
}

#[derive(Debug, Default, Deserialize)]
struct RawQuery {
    from: Option<String>,
    to: Option<String>,
    max_points: Option<String>,
}

fn parse_param<T: std::str::FromStr>(
    name: &str,
    raw: Option<String>,
) -> Result<Option<T>, ServerError> {
    match raw.as_deref().map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|_| ServerError::BadQuery(format!("{name}={s} is not a valid integer"))),
    }
}

impl TryFrom<RawQuery> for CommunityQuery {
    type Error = ServerError;

    fn try_from(raw: RawQuery) -> Result<Self, ServerError> {
        let max_points = parse_param::<usize>("max_points", raw.max_points)?;
        if max_points == Some(0) {
            return Err(ServerError::BadQuery("max_points must be >= 1".into()));
        }
        Ok(Self {
            from: parse_param("from", raw.from)?,
            to: parse_param("to", raw.to)?,
            max_points,
        })
    }
}

async fn list_handler(
    State(store): State<Arc<ArtifactStore>>,
) -> Result<Json<Vec<CommunitySummary>>, ServerError> {
    let store = Arc::clone(&store);
    tokio::task::spawn_blocking(move || store.list_communities())
        .await
        .expect("listing task panicked")
        .map(Json)
}

async fn community_handler(
    State(store): State<Arc<ArtifactStore>>,
    UrlPath(id): UrlPath<String>,
    Query(raw): Query<RawQuery>,
) -> Result<Response, ServerError> {
    let query = CommunityQuery::try_from(raw)?;
    let store = Arc::clone(&store);
    let artifact = tokio::task::spawn_blocking(move || store.get_community(&id, query))
        .await
        .expect("query task panicked")?;
    Ok(Json(artifact).into_response())
}

async fn healthz() -> &'static str {
    "ok"
}

fn cors_layer(origin: &str) -> CorsLayer {
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    match origin {
        "*" => layer.allow_origin(Any),
        o => match HeaderValue::from_str(o) {
            Ok(v) => layer.allow_origin(v),
            Err(_) => {
                log::warn!("invalid cors_allowed_origin `{o}`; CORS disabled");
                CorsLayer::new()
            }
        },
    }
}

/// The API router. `static_dir`, when given, is served at `/`.
pub fn router(
    store: Arc<ArtifactStore>,
    cors_allowed_origin: &str,
    static_dir: Option<&Path>,
) -> Router {
    let api = Router::new()
        .route("/api/v1/communities", get(list_handler))
        .route("/api/v1/communities/{id}", get(community_handler))
        .route("/healthz", get(healthz))
        .with_state(store);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(cors_layer(cors_allowed_origin))
}

/// Binds `config.bind` and serves until Ctrl-C.
pub async fn serve(
    config: &ServerConfig,
    artifact_dir: &Path,
    seed: u64,
) -> Result<(), ServerError> {
    let store = Arc::new(ArtifactStore::open(artifact_dir, config.max_points, seed)?);
    let app = router(
        store,
        &config.cors_allowed_origin,
        config.static_dir.as_deref(),
    );
    let addr: SocketAddr = config
        .bind
        .parse()
        .map_err(|_| ServerError::InvalidBind(config.bind.clone()))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!(
        "serving {} on http://{}",
        artifact_dir.display(),
        listener.local_addr()?
    );
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
