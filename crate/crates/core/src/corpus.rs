//! Post ingestion: record parsing, validation and canonical per-community timelines.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::DateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("bad timestamp: {0}")]
    BadTimestamp(String),
    #[error("duplicate post_id `{post_id}` in community `{community_id}`")]
    DuplicatePostId {
        community_id: String,
        post_id: String,
    },
    #[error("timeline mixes communities `{0}` and `{1}`")]
    MixedCommunities(String, String),
    #[error("{path}:{line}: {source}")]
    AtLine {
        path: PathBuf,
        line: usize,
        #[source]
        source: Box<CorpusError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// On-disk encoding of post records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    #[default]
    Jsonl,
    Csv,
}

impl std::str::FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(InputFormat::Jsonl),
            "csv" => Ok(InputFormat::Csv),
            other => Err(format!("unknown input format `{other}`")),
        }
    }
}

/// One forum message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub community_id: String,
    pub author: Option<String>,
    /// UTC epoch seconds.
    pub timestamp: i64,
    pub body: String,
}

/// Posts of one community in canonical `(timestamp, post_id)` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timeline {
    community_id: String,
    posts: Vec<Post>,
}

impl Timeline {
    pub fn community_id(&self) -> &str {
        &self.community_id
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn into_posts(self) -> Vec<Post> {
        self.posts
    }
}

/// Column order assumed by [`parse_post_record`] for a bare CSV line.
pub const CSV_COLUMNS: [&str; 5] = ["post_id", "community_id", "author", "timestamp", "body"];

/// Parses an epoch-seconds integer or RFC 3339 string into UTC epoch seconds.
pub fn parse_timestamp(raw: &str) -> Result<i64, CorpusError> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Ok(secs);
    }
    DateTime::parse_from_rfc3339(raw)
        .map(|dt| dt.timestamp())
        .map_err(|e| CorpusError::BadTimestamp(format!("`{raw}`: {e}")))
}

/// Parses one record. CSV lines are read against [`CSV_COLUMNS`]; files go
/// through [`load_corpus`], which honours the header row instead.
pub fn parse_post_record(raw: &str, format: InputFormat) -> Result<Post, CorpusError> {
    match format {
        InputFormat::Jsonl => parse_json_record(raw),
        InputFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .from_reader(raw.as_bytes());
            let record = reader
                .records()
                .next()
                .ok_or_else(|| CorpusError::MalformedRecord("empty line".into()))?
                .map_err(|e| CorpusError::MalformedRecord(e.to_string()))?;
            let header = csv::StringRecord::from(CSV_COLUMNS.to_vec());
            post_from_csv(&header, &record)
        }
    }
}

fn parse_json_record(raw: &str) -> Result<Post, CorpusError> {
    let value: Value =
        serde_json::from_str(raw).map_err(|e| CorpusError::MalformedRecord(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| CorpusError::MalformedRecord("record is not a JSON object".into()))?;

    let string_field = |name: &'static str| -> Result<Option<String>, CorpusError> {
        match obj.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(CorpusError::MalformedRecord(format!(
                "field `{name}` must be a string, got {other}"
            ))),
        }
    };
    let required = |name: &'static str| -> Result<String, CorpusError> {
        string_field(name)?.ok_or(CorpusError::MissingField(name))
    };

    let post_id = required("post_id")?;
    let community_id = required("community_id")?;
    let body = required("body")?;
    let author = string_field("author")?;
    let timestamp = match obj.get("timestamp") {
        None | Some(Value::Null) => return Err(CorpusError::MissingField("timestamp")),
        Some(Value::Number(n)) => n
            .as_i64()
            .ok_or_else(|| CorpusError::BadTimestamp(format!("`{n}` is not an integer")))?,
        Some(Value::String(s)) => parse_timestamp(s)?,
        Some(other) => return Err(CorpusError::BadTimestamp(format!("`{other}`"))),
    };
    validated(Post {
        post_id,
        community_id,
        author,
        timestamp,
        body,
    })
}

fn post_from_csv(
    header: &csv::StringRecord,
    record: &csv::StringRecord,
) -> Result<Post, CorpusError> {
    let column = |name: &'static str| -> Option<&str> {
        header
            .iter()
            .position(|h| h.trim() == name)
            .and_then(|i| record.get(i))
    };
    let required = |name: &'static str| -> Result<String, CorpusError> {
        column(name)
            .map(str::to_owned)
            .ok_or(CorpusError::MissingField(name))
    };
    let post_id = required("post_id")?;
    let community_id = required("community_id")?;
    let body = required("body")?;
    let timestamp = parse_timestamp(&required("timestamp")?)?;
    let author = column("author")
        .filter(|a| !a.is_empty())
        .map(str::to_owned);
    validated(Post {
        post_id,
        community_id,
        author,
        timestamp,
        body,
    })
}

fn validated(post: Post) -> Result<Post, CorpusError> {
    if post.post_id.is_empty() {
        return Err(CorpusError::MalformedRecord("empty post_id".into()));
    }
    if post.community_id.is_empty() {
        return Err(CorpusError::MalformedRecord("empty community_id".into()));
    }
    Ok(post)
}

fn at_line(path: &Path, line: usize) -> impl FnOnce(CorpusError) -> CorpusError + '_ {
    move |e| CorpusError::AtLine {
        path: path.to_path_buf(),
        line,
        source: Box::new(e),
    }
}

fn read_file(path: &Path, format: InputFormat) -> Result<Vec<Post>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut posts = Vec::new();
    match format {
        InputFormat::Jsonl => {
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                posts.push(parse_json_record(&line).map_err(at_line(path, i + 1))?);
            }
        }
        InputFormat::Csv => {
            let mut reader = csv::Reader::from_reader(file);
            let header = reader
                .headers()
                .map_err(|e| at_line(path, 1)(CorpusError::MalformedRecord(e.to_string())))?
                .clone();
            for record in reader.records() {
                let record = record.map_err(|e| {
                    let line = e.position().map_or(0, |p| p.line() as usize);
                    at_line(path, line)(CorpusError::MalformedRecord(e.to_string()))
                })?;
                let line = record.position().map_or(0, |p| p.line() as usize);
                posts.push(post_from_csv(&header, &record).map_err(at_line(path, line))?);
            }
        }
    }
    Ok(posts)
}

/// Loads every file, groups by community and orders each timeline canonically.
pub fn load_corpus<P: AsRef<Path> + Sync>(
    paths: &[P],
    format: InputFormat,
) -> Result<BTreeMap<String, Timeline>, CorpusError> {
    let per_file: Vec<Vec<Post>> = paths
        .par_iter()
        .map(|p| read_file(p.as_ref(), format))
        .collect::<Result<_, _>>()?;

    let mut grouped: BTreeMap<String, Vec<Post>> = BTreeMap::new();
    for post in per_file.into_iter().flatten() {
        grouped
            .entry(post.community_id.clone())
            .or_default()
            .push(post);
    }

    grouped
        .into_iter()
        .map(|(community, posts)| {
            let mut seen = HashSet::with_capacity(posts.len());
            for post in &posts {
                if !seen.insert(post.post_id.as_str()) {
                    return Err(CorpusError::DuplicatePostId {
                        community_id: community.clone(),
                        post_id: post.post_id.clone(),
                    });
                }
            }
            Ok((community, order_timeline(posts)?))
        })
        .collect()
}

/// Stable sort by `(timestamp, post_id)`.
pub fn order_timeline(mut posts: Vec<Post>) -> Result<Timeline, CorpusError> {
    let community_id = match posts.first() {
        Some(p) => p.community_id.clone(),
        None => String::new(),
    };
    if let Some(other) = posts.iter().find(|p| p.community_id != community_id) {
        return Err(CorpusError::MixedCommunities(
            community_id,
            other.community_id.clone(),
        ));
    }
    posts.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.post_id.cmp(&b.post_id))
    });
    Ok(Timeline {
        community_id,
        posts,
    })
}
