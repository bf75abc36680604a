//! Per-community export: the data contract between the pipeline, the server
//! and the dashboard.
//!
//! One JSON document per community, `artifact-<community_id>.json`, with
//! top-level keys in this order: `schema_version`, `community_id`,
//! `generated_at`, `window`, `total_posts`, `records`, `summaries`. Records
//! are in canonical `(timestamp, post_id)` order and each has the keys
//! `post_id`, `timestamp`, `x`, `y`, `novelty`, `transience`, `resonance`,
//! `cluster`, `author`, `snippet` (absent values are `null`). Numbers use the
//! shortest representation that round-trips, and the file ends with a
//! newline, so identical inputs give byte-identical files.

mod downsample;
mod histogram;
mod schema;

pub use downsample::downsample;
pub use histogram::{Histogram, Metric};
pub use schema::{validate_artifact_json, SchemaViolation};

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Timeline;
use crate::dynamics::{DynamicsRecord, WindowConfig};
use crate::manifold::ProjectedPoint;

pub const SCHEMA_VERSION: u32 = 1;
pub const SNIPPET_CHARS: usize = 200;
pub const DEFAULT_BINS: usize = 40;
pub const DEFAULT_MAX_POINTS: usize = 20_000;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("alignment error: {0}")]
    AlignmentError(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid artifact {path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
    #[error("community id `{0}` cannot be used in a file name")]
    UnsafeCommunityId(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostRecord {
    pub post_id: String,
    pub timestamp: i64,
    pub x: f64,
    pub y: f64,
    pub novelty: Option<f64>,
    pub transience: Option<f64>,
    pub resonance: Option<f64>,
    pub cluster: i64,
    pub author: Option<String>,
    pub snippet: String,
}

impl PostRecord {
    pub fn metric(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Novelty => self.novelty,
            Metric::Transience => self.transience,
            Metric::Resonance => self.resonance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summaries {
    pub novelty: Histogram,
    pub transience: Histogram,
    pub resonance: Histogram,
}

impl Summaries {
    pub fn compute(records: &[PostRecord], bins: usize) -> Self {
        let hist = |m: Metric| {
            let values: Vec<f64> = records.iter().filter_map(|r| r.metric(m)).collect();
            Histogram::compute(m, &values, bins)
        };
        Self {
            novelty: hist(Metric::Novelty),
            transience: hist(Metric::Transience),
            resonance: hist(Metric::Resonance),
        }
    }

    pub fn get(&self, metric: Metric) -> &Histogram {
        match metric {
            Metric::Novelty => &self.novelty,
            Metric::Transience => &self.transience,
            Metric::Resonance => &self.resonance,
        }
    }

    /// Bin count of the stored histograms (0 when they are empty).
    pub fn bins(&self) -> usize {
        Metric::ALL
            .iter()
            .map(|m| self.get(*m).counts.len())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommunityArtifact {
    pub schema_version: u32,
    pub community_id: String,
    pub generated_at: i64,
    pub window: WindowConfig,
    /// Record count before any downsampling.
    pub total_posts: usize,
    pub records: Vec<PostRecord>,
    pub summaries: Summaries,
}

impl CommunityArtifact {
    pub fn time_range(&self) -> Option<(i64, i64)> {
        let min = self.records.iter().map(|r| r.timestamp).min()?;
        let max = self.records.iter().map(|r| r.timestamp).max()?;
        Some((min, max))
    }

    /// Checks record order, finiteness, snippet length, the resonance
    /// identity and histogram totals.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {}",
                self.schema_version
            ));
        }
        for w in self.records.windows(2) {
            if (w[0].timestamp, &w[0].post_id) >= (w[1].timestamp, &w[1].post_id) {
                return Err(format!("records out of order at `{}`", w[1].post_id));
            }
        }
        for r in &self.records {
            if !(r.x.is_finite() && r.y.is_finite()) {
                return Err(format!("non-finite coordinates for `{}`", r.post_id));
            }
            if r.snippet.chars().count() > SNIPPET_CHARS {
                return Err(format!("snippet too long for `{}`", r.post_id));
            }
            if r.cluster < -1 {
                return Err(format!(
                    "bad cluster label {} for `{}`",
                    r.cluster, r.post_id
                ));
            }
            let expected = match (r.novelty, r.transience) {
                (Some(n), Some(t)) => Some(n - t),
                _ => None,
            };
            if r.resonance != expected {
                return Err(format!(
                    "resonance != novelty - transience for `{}`",
                    r.post_id
                ));
            }
        }
        for m in Metric::ALL {
            let present = self
                .records
                .iter()
                .filter(|r| r.metric(m).is_some())
                .count() as u64;
            let h = self.summaries.get(m);
            if h.metric != m {
                return Err(format!("summary for {m:?} is labelled {:?}", h.metric));
            }
            if h.total() != present
                || (!h.counts.is_empty() && h.bin_edges.len() != h.counts.len() + 1)
            {
                return Err(format!(
                    "histogram for {m:?} does not partition the records"
                ));
            }
        }
        Ok(())
    }
}

/// First `SNIPPET_CHARS` unicode scalar values of `body`.
pub fn snippet(body: &str) -> String {
    body.chars().take(SNIPPET_CHARS).collect()
}

/// Joins the per-post outputs of every stage into one artifact. `labels` are
/// positional (one per timeline post); coordinates and dynamics are joined by
/// post id.
pub fn build_artifact(
    timeline: &Timeline,
    coords: &[ProjectedPoint],
    dynamics: &[DynamicsRecord],
    labels: &[i64],
    window: WindowConfig,
    bins: usize,
    generated_at: i64,
) -> Result<CommunityArtifact, ArtifactError> {
    let n = timeline.len();
    if coords.len() != n || dynamics.len() != n || labels.len() != n {
        return Err(ArtifactError::AlignmentError(format!(
            "{n} posts, {} coordinates, {} dynamics records, {} labels",
            coords.len(),
            dynamics.len(),
            labels.len()
        )));
    }
    if bins == 0 {
        return Err(ArtifactError::AlignmentError("bins must be >= 1".into()));
    }
    let coord_by_id: HashMap<&str, &ProjectedPoint> =
        coords.iter().map(|c| (c.post_id.as_str(), c)).collect();
    let dyn_by_id: HashMap<&str, &DynamicsRecord> =
        dynamics.iter().map(|d| (d.post_id.as_str(), d)).collect();

    let mut records = Vec::with_capacity(n);
    for (post, &cluster) in timeline.posts().iter().zip(labels) {
        let id = post.post_id.as_str();
        let c = coord_by_id
            .get(id)
            .ok_or_else(|| ArtifactError::AlignmentError(format!("no coordinates for `{id}`")))?;
        let d = dyn_by_id
            .get(id)
            .ok_or_else(|| ArtifactError::AlignmentError(format!("no dynamics for `{id}`")))?;
        records.push(PostRecord {
            post_id: post.post_id.clone(),
            timestamp: post.timestamp,
            x: c.x,
            y: c.y,
            novelty: d.novelty,
            transience: d.transience,
            resonance: d.resonance,
            cluster,
            author: post.author.clone(),
            snippet: snippet(&post.body),
        });
    }
    let summaries = Summaries::compute(&records, bins);
    Ok(CommunityArtifact {
        schema_version: SCHEMA_VERSION,
        community_id: timeline.community_id().to_owned(),
        generated_at,
        window,
        total_posts: n,
        records,
        summaries,
    })
}

/// Whether `id` can be embedded in an artifact file name as-is.
pub fn is_safe_community_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

pub fn artifact_file_name(community_id: &str) -> Result<String, ArtifactError> {
    if !is_safe_community_id(community_id) {
        return Err(ArtifactError::UnsafeCommunityId(community_id.to_owned()));
    }
    Ok(format!("artifact-{community_id}.json"))
}

/// Canonical bytes: compact JSON in declaration order plus a trailing newline.
pub fn to_canonical_json(artifact: &CommunityArtifact) -> Vec<u8> {
    let mut bytes = serde_json::to_vec(artifact).expect("artifact serializes");
    bytes.push(b'\n');
    bytes
}

/// Writes atomically (temp file + rename) so a concurrent reader never sees
/// a partial document.
pub fn write_artifact(artifact: &CommunityArtifact, path: &Path) -> Result<(), ArtifactError> {
    let io = |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&to_canonical_json(artifact)).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

pub fn read_artifact(path: &Path) -> Result<CommunityArtifact, ArtifactError> {
    let bytes = fs::read(path).map_err(|source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let invalid = |reason: String| ArtifactError::Invalid {
        path: path.to_path_buf(),
        reason,
    };
    let artifact: CommunityArtifact =
        serde_json::from_slice(&bytes).map_err(|e| invalid(e.to_string()))?;
    artifact.check_invariants().map_err(invalid)?;
    Ok(artifact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{order_timeline, Post};
    use crate::dynamics::WindowMode;

    fn timeline() -> Timeline {
        order_timeline(
            (0..3)
                .map(|i| Post {
                    post_id: format!("p{i}"),
                    community_id: "hydra".into(),
                    author: (i == 1).then(|| "alice".to_owned()),
                    timestamp: 100 + i,
                    body: "é".repeat(250),
                })
                .collect(),
        )
        .unwrap()
    }

    fn inputs() -> (Vec<ProjectedPoint>, Vec<DynamicsRecord>, Vec<i64>) {
        let coords = (0..3)
            .map(|i| ProjectedPoint {
                post_id: format!("p{i}"),
                x: i as f64,
                y: -(i as f64) / 3.0,
            })
            .collect();
        let dynamics = vec![
            DynamicsRecord {
                post_id: "p0".into(),
                novelty: None,
                transience: Some(0.25),
                resonance: None,
            },
            DynamicsRecord {
                post_id: "p1".into(),
                novelty: Some(0.5),
                transience: Some(0.125),
                resonance: Some(0.375),
            },
            DynamicsRecord {
                post_id: "p2".into(),
                novelty: Some(0.1),
                transience: None,
                resonance: None,
            },
        ];
        (coords, dynamics, vec![0, -1, 0])
    }

    fn window() -> WindowConfig {
        WindowConfig {
            n: 1,
            mode: WindowMode::MeanDistribution,
        }
    }

    #[test]
    fn aligned_inputs_join() {
        let (c, d, l) = inputs();
        let a = build_artifact(&timeline(), &c, &d, &l, window(), 4, 7).unwrap();
        assert_eq!(a.records.len(), 3);
        assert_eq!(a.total_posts, 3);
        assert_eq!(a.records[1].author.as_deref(), Some("alice"));
        assert_eq!(a.records[0].snippet.chars().count(), SNIPPET_CHARS);
        assert_eq!(a.summaries.novelty.total(), 2);
        assert_eq!(a.summaries.resonance.total(), 1);
        a.check_invariants().unwrap();
    }

    #[test]
    fn missing_coordinates_is_alignment_error() {
        let (mut c, d, l) = inputs();
        c[1].post_id = "other".into();
        assert!(matches!(
            build_artifact(&timeline(), &c, &d, &l, window(), 4, 0),
            Err(ArtifactError::AlignmentError(_))
        ));
        let (c, d, _) = inputs();
        assert!(matches!(
            build_artifact(&timeline(), &c, &d, &[0, 0], window(), 4, 0),
            Err(ArtifactError::AlignmentError(_))
        ));
    }

    #[test]
    fn write_is_byte_identical_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let (c, d, l) = inputs();
        let a = build_artifact(&timeline(), &c, &d, &l, window(), 4, 0).unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        write_artifact(&a, &p1).unwrap();
        write_artifact(&a, &p2).unwrap();
        let b1 = fs::read(&p1).unwrap();
        assert_eq!(b1, fs::read(&p2).unwrap());
        assert_eq!(b1.last(), Some(&b'\n'));
        assert_eq!(read_artifact(&p1).unwrap(), a);
        let text = String::from_utf8(b1).unwrap();
        // -1/3 needs all 17 significant digits to round-trip
        assert!(text.contains("-0.3333333333333333"));
        let keys = [
            "\"schema_version\"",
            "\"community_id\"",
            "\"generated_at\"",
            "\"window\"",
            "\"total_posts\"",
            "\"records\"",
            "\"summaries\"",
        ];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn empty_artifact_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let empty = order_timeline(vec![]).unwrap();
        let a = build_artifact(&empty, &[], &[], &[], window(), 40, 0).unwrap();
        let p = dir.path().join("e.json");
        write_artifact(&a, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"records\":[]"));
        assert_eq!(read_artifact(&p).unwrap(), a);
        validate_artifact_json(&serde_json::from_str(&text).unwrap()).unwrap();
    }

    #[test]
    fn file_names() {
        assert_eq!(artifact_file_name("hydra").unwrap(), "artifact-hydra.json");
        assert!(artifact_file_name("../etc").is_err());
        assert!(artifact_file_name("").is_err());
        assert!(artifact_file_name("a/b").is_err());
    }

    #[test]
    fn tampered_artifact_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (c, d, l) = inputs();
        let mut a = build_artifact(&timeline(), &c, &d, &l, window(), 4, 0).unwrap();
        a.records[1].resonance = Some(1.0);
        let p = dir.path().join("t.json");
        write_artifact(&a, &p).unwrap();
        assert!(matches!(
            read_artifact(&p),
            Err(ArtifactError::Invalid { .. })
        ));
    }
}
