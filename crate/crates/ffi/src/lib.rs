//! C ABI over the discourse-dynamics engine.
//!
//! Every fallible function returns a [`DdStatus`]; on failure a message is
//! available from [`dd_last_error_message`] on the same thread. Results that
//! own memory are returned as opaque handles with matching `_free`
//! functions. Absent metrics (posts without a full window) are reported as
//! NaN.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use discourse_dynamics::clustering::{dbscan, ClusterSpace, DbscanParams};
use discourse_dynamics::dynamics::{
    compute_dynamics, kl_divergence, DynamicsRecord, WindowConfig, WindowMode,
};
use discourse_dynamics::embedding::{fallback_embed, to_distribution, Distribution, Embedding};
use discourse_dynamics::manifold::{tsne_embed, TsneOutput, TsneParams};
use discourse_dynamics::pipeline::{
    generate_synthetic_corpus, run_pipeline, write_jsonl, CommunityStatus, PipelineConfig,
    PipelineError,
};
use ndarray::ArrayView2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Io = 4,
    Config = 5,
    PartialFailure = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdWindowMode {
    MeanDistribution = 0,
    MeanDivergence = 1,
}

/// Dynamics for one post; absent values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DdDynamicsRow {
    pub novelty: f64,
    pub transience: f64,
    pub resonance: f64,
}

/// Opaque result of [`dd_dynamics_compute`].
pub struct DdDynamics {
    rows: Vec<DynamicsRecord>,
}

/// Opaque result of [`dd_tsne`].
pub struct DdProjection {
    output: TsneOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(DdStatus, String);

impl Failure {
    fn new(status: DdStatus, msg: impl std::fmt::Display) -> Self {
        Self(status, msg.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DdStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DdStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(
            DdStatus::NullPointer,
            format!("{name} is null"),
        ))
    } else {
        Ok(())
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure::new(
            DdStatus::InvalidArgument,
            format!("{name} is not valid UTF-8"),
        )
    })
}

fn pipeline_failure(e: PipelineError) -> Failure {
    let status = match e {
        PipelineError::Config(_) => DdStatus::Config,
        PipelineError::BadParams(_) => DdStatus::InvalidArgument,
        PipelineError::Io(_) | PipelineError::Corpus(_) => DdStatus::Io,
        _ => DdStatus::Internal,
    };
    Failure::new(status, e)
}

fn opt(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn dd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Temperature-scaled softmax of `values[0..len]` into `out[0..len]`.
///
/// # Safety
/// `values` and `out` must each point to `len` valid `double`s.
#[no_mangle]
pub unsafe extern "C" fn dd_softmax(
    values: *const f64,
    len: usize,
    temperature: f64,
    out: *mut f64,
) -> DdStatus {
    guard(|| {
        let v = slice(values, len, "values")?;
        let o = slice_mut(out, len, "out")?;
        if len == 0 || !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Failure::new(
                DdStatus::InvalidArgument,
                "need len > 0 and a positive temperature",
            ));
        }
        let e =
            Embedding::new(v.to_vec()).map_err(|e| Failure::new(DdStatus::InvalidArgument, e))?;
        o.copy_from_slice(to_distribution(&e, temperature).probs());
        Ok(())
    })
}

/// KL(p || q) in nats. Both inputs must be probability vectors with every
/// entry at least 1e-12.
///
/// # Safety
/// `p` and `q` must each point to `len` valid `double`s; `out` must be valid
/// for one write.
#[no_mangle]
pub unsafe extern "C" fn dd_kl_divergence(
    p: *const f64,
    q: *const f64,
    len: usize,
    out: *mut f64,
) -> DdStatus {
    guard(|| {
        non_null(out, "out")?;
        let dist = |s: &[f64], name: &str| {
            Distribution::from_probs(s.to_vec()).ok_or_else(|| {
                Failure::new(
                    DdStatus::InvalidArgument,
                    format!("{name} is not a floored probability vector"),
                )
            })
        };
        let p = dist(slice(p, len, "p")?, "p")?;
        let q = dist(slice(q, len, "q")?, "q")?;
        *out = kl_divergence(&p, &q).map_err(|e| Failure::new(DdStatus::DimensionMismatch, e))?;
        Ok(())
    })
}

/// Deterministic hashed n-gram embedding of a UTF-8 string into
/// `out[0..dimension]`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must point to `dimension`
/// writable `double`s.
#[no_mangle]
pub unsafe extern "C" fn dd_fallback_embed(
    text: *const c_char,
    dimension: usize,
    seed: u64,
    out: *mut f64,
) -> DdStatus {
    guard(|| {
        let text = c_str(text, "text")?;
        if dimension == 0 {
            return Err(Failure::new(
                DdStatus::InvalidArgument,
                "dimension must be >= 1",
            ));
        }
        let o = slice_mut(out, dimension, "out")?;
        o.copy_from_slice(fallback_embed(text, dimension, seed).values());
        Ok(())
    })
}

/// Novelty, transience and resonance for `n` distributions stored row-major
/// in `dists` (`n * dim` values, each row a floored probability vector).
/// `mode` is a [`DdWindowMode`] value.
///
/// # Safety
/// `dists` must point to `n * dim` valid `double`s; `out` must be valid for
/// one write. Free the handle with [`dd_dynamics_free`].
#[no_mangle]
pub unsafe extern "C" fn dd_dynamics_compute(
    dists: *const f64,
    n: usize,
    dim: usize,
    window: usize,
    mode: u32,
    out: *mut *mut DdDynamics,
) -> DdStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        if n == 0 || dim == 0 || window == 0 {
            return Err(Failure::new(
                DdStatus::InvalidArgument,
                "n, dim and window must be >= 1",
            ));
        }
        let total = n
            .checked_mul(dim)
            .ok_or_else(|| Failure::new(DdStatus::InvalidArgument, "n * dim overflows"))?;
        let data = slice(dists, total, "dists")?;
        let seq = data
            .chunks_exact(dim)
            .enumerate()
            .map(|(i, row)| {
                Distribution::from_probs(row.to_vec())
                    .map(|d| (i.to_string(), d))
                    .ok_or_else(|| {
                        Failure::new(
                            DdStatus::InvalidArgument,
                            format!("row {i} is not a floored probability vector"),
                        )
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mode = match mode {
            m if m == DdWindowMode::MeanDistribution as u32 => WindowMode::MeanDistribution,
            m if m == DdWindowMode::MeanDivergence as u32 => WindowMode::MeanDivergence,
            m => {
                return Err(Failure::new(
                    DdStatus::InvalidArgument,
                    format!("unknown window mode {m}"),
                ))
            }
        };
        let rows = compute_dynamics(&seq, &WindowConfig { n: window, mode })
            .map_err(|e| Failure::new(DdStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(DdDynamics { rows }));
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle from [`dd_dynamics_compute`].
#[no_mangle]
pub unsafe extern "C" fn dd_dynamics_len(h: *const DdDynamics) -> usize {
    h.as_ref().map_or(0, |h| h.rows.len())
}

/// # Safety
/// `h` must be a live handle; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dd_dynamics_get(
    h: *const DdDynamics,
    index: usize,
    out: *mut DdDynamicsRow,
) -> DdStatus {
    guard(|| {
        non_null(h, "handle")?;
        non_null(out, "out")?;
        let r = (&*h).rows.get(index).ok_or_else(|| {
            Failure::new(
                DdStatus::InvalidArgument,
                format!("index {index} out of range"),
            )
        })?;
        *out = DdDynamicsRow {
            novelty: opt(r.novelty),
            transience: opt(r.transience),
            resonance: opt(r.resonance),
        };
        Ok(())
    })
}

/// # Safety
/// `h` must be NULL or a handle from [`dd_dynamics_compute`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dd_dynamics_free(h: *mut DdDynamics) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// 2-D t-SNE of `n` row-major points of dimension `dim`, with default
/// parameters apart from perplexity, iteration count and seed.
///
/// # Safety
/// `data` must point to `n * dim` valid `double`s; `out` must be valid for
/// one write. Free the handle with [`dd_projection_free`].
#[no_mangle]
pub unsafe extern "C" fn dd_tsne(
    data: *const f64,
    n: usize,
    dim: usize,
    perplexity: f64,
    n_iter: usize,
    seed: u64,
    out: *mut *mut DdProjection,
) -> DdStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let total = n
            .checked_mul(dim)
            .ok_or_else(|| Failure::new(DdStatus::InvalidArgument, "n * dim overflows"))?;
        let x = ArrayView2::from_shape((n, dim), slice(data, total, "data")?)
            .map_err(|e| Failure::new(DdStatus::InvalidArgument, e))?;
        let params = TsneParams {
            perplexity,
            n_iter,
            seed,
            ..TsneParams::default()
        };
        let output =
            tsne_embed(x, &params).map_err(|e| Failure::new(DdStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(DdProjection { output }));
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle from [`dd_tsne`].
#[no_mangle]
pub unsafe extern "C" fn dd_projection_len(h: *const DdProjection) -> usize {
    h.as_ref().map_or(0, |h| h.output.coords.nrows())
}

/// # Safety
/// `h` must be a live handle; `x` and `y` must be valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn dd_projection_get(
    h: *const DdProjection,
    index: usize,
    x: *mut f64,
    y: *mut f64,
) -> DdStatus {
    guard(|| {
        non_null(h, "handle")?;
        non_null(x, "x")?;
        non_null(y, "y")?;
        let coords = &(&*h).output.coords;
        if index >= coords.nrows() {
            return Err(Failure::new(
                DdStatus::InvalidArgument,
                format!("index {index} out of range"),
            ));
        }
        *x = coords[[index, 0]];
        *y = coords[[index, 1]];
        Ok(())
    })
}

/// Number of objective samples (one per 50 iterations).
///
/// # Safety
/// `h` must be a live handle from [`dd_tsne`].
#[no_mangle]
pub unsafe extern "C" fn dd_projection_objective_len(h: *const DdProjection) -> usize {
    h.as_ref().map_or(0, |h| h.output.objective_trace.len())
}

/// Copies up to `len` objective samples into `out`; returns the number
/// copied.
///
/// # Safety
/// `h` must be a live handle; `out` must point to `len` writable `double`s.
#[no_mangle]
pub unsafe extern "C" fn dd_projection_objective(
    h: *const DdProjection,
    out: *mut f64,
    len: usize,
) -> usize {
    let (Some(h), false) = (h.as_ref(), out.is_null()) else {
        return 0;
    };
    let trace = &h.output.objective_trace;
    let k = trace.len().min(len);
    std::slice::from_raw_parts_mut(out, k).copy_from_slice(&trace[..k]);
    k
}

/// # Safety
/// `h` must be NULL or a handle from [`dd_tsne`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dd_projection_free(h: *mut DdProjection) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// DBSCAN over `n` row-major points of dimension `m`. Writes one label per
/// point into `labels`; -1 marks noise. Points are clustered as given, with
/// no standardization.
///
/// # Safety
/// `points` must point to `n * m` valid `double`s and `labels` to `n`
/// writable `int64_t`s.
#[no_mangle]
pub unsafe extern "C" fn dd_dbscan(
    points: *const f64,
    n: usize,
    m: usize,
    eps: f64,
    min_pts: usize,
    labels: *mut i64,
) -> DdStatus {
    guard(|| {
        let total = n
            .checked_mul(m)
            .ok_or_else(|| Failure::new(DdStatus::InvalidArgument, "n * m overflows"))?;
        let x = ArrayView2::from_shape((n, m), slice(points, total, "points")?)
            .map_err(|e| Failure::new(DdStatus::InvalidArgument, e))?;
        let out = slice_mut(labels, n, "labels")?;
        let space = if m == 2 {
            ClusterSpace::Projection2d
        } else {
            ClusterSpace::EmbeddingD
        };
        let params = DbscanParams {
            eps,
            min_pts,
            space,
        };
        let l = dbscan(x, &params).map_err(|e| Failure::new(DdStatus::InvalidArgument, e))?;
        out.copy_from_slice(&l);
        Ok(())
    })
}

/// Writes a synthetic JSONL corpus with a topic switch at `switch_index`.
///
/// # Safety
/// `community_id` and `path` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn dd_synth_corpus(
    community_id: *const c_char,
    n_posts: usize,
    switch_index: usize,
    seed: u64,
    path: *const c_char,
) -> DdStatus {
    guard(|| {
        let cid = c_str(community_id, "community_id")?;
        let path = c_str(path, "path")?;
        let posts = generate_synthetic_corpus(cid, n_posts, switch_index, seed)
            .map_err(pipeline_failure)?;
        write_jsonl(&posts, Path::new(path)).map_err(pipeline_failure)
    })
}

/// Runs the full pipeline from a TOML config file. Returns
/// `PartialFailure` when at least one community failed; the others are
/// still written.
///
/// # Safety
/// `config_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dd_run_pipeline(config_path: *const c_char) -> DdStatus {
    guard(|| {
        let path = c_str(config_path, "config_path")?;
        let cfg = PipelineConfig::load(Path::new(path)).map_err(pipeline_failure)?;
        let report = run_pipeline(&cfg).map_err(pipeline_failure)?;
        if report.has_failures() {
            let failed: Vec<&str> = report
                .communities
                .iter()
                .filter(|c| c.status == CommunityStatus::Failed)
                .map(|c| c.community_id.as_str())
                .collect();
            return Err(Failure::new(
                DdStatus::PartialFailure,
                format!("failed communities: {failed:?}"),
            ));
        }
        Ok(())
    })
}
