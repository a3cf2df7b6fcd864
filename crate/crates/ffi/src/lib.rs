//! C ABI over `vwsd-core`.
//!
//! Every fallible call returns a [`VwsdStatus`]; on failure the message is
//! available from [`vwsd_last_error_message`] on the same thread. Strings
//! returned through out-pointers are owned by the caller and released with
//! [`vwsd_string_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;
use std::sync::Arc;

use vwsd_core::backend::{decode_image, EmbeddingBackend};
use vwsd_core::config::{ConfigSource, RunConfig};
use vwsd_core::dataset::{load_dataset, SplitName, CANDIDATES};
use vwsd_core::eval::{compute_hit_rate, compute_mrr, evaluate};
use vwsd_core::pipeline::{predict, Resources};
use vwsd_core::VwsdError;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VwsdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    Dataset = 5,
    Image = 6,
    CandidateCount = 7,
    Numeric = 8,
    Runtime = 9,
    Panic = 10,
}

impl From<&VwsdError> for VwsdStatus {
    fn from(e: &VwsdError) -> Self {
        match e {
            VwsdError::Config(_) | VwsdError::UnknownConfigKey(_) | VwsdError::Unsupported { .. } => {
                VwsdStatus::Config
            }
            VwsdError::Io { .. } => VwsdStatus::Io,
            VwsdError::Dataset { .. } | VwsdError::GoldLineCount { .. } => VwsdStatus::Dataset,
            VwsdError::Image { .. } => VwsdStatus::Image,
            VwsdError::CandidateCount { .. } => VwsdStatus::CandidateCount,
            VwsdError::ZeroVector(_)
            | VwsdError::Degenerate(_)
            | VwsdError::DimensionMismatch { .. }
            | VwsdError::EmptyInput(_) => VwsdStatus::Numeric,
            _ => VwsdStatus::Runtime,
        }
    }
}

/// A configured backend plus its resources. Opaque to C.
pub struct VwsdPipeline {
    run: RunConfig,
    backend: Arc<dyn EmbeddingBackend>,
    resources: Resources,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(VwsdStatus, String);

impl From<VwsdError> for Failure {
    fn from(e: VwsdError) -> Self {
        Failure(VwsdStatus::from(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VwsdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            VwsdStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            VwsdStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(VwsdStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(VwsdStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn read_opt_path(p: *const c_char, what: &str) -> Result<Option<PathBuf>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        Ok(Some(PathBuf::from(read_str(p, what)?)))
    }
}

fn null(what: &str) -> Failure {
    Failure(VwsdStatus::NullPointer, format!("{what} is null"))
}

fn build_pipeline(source: ConfigSource) -> Result<Box<VwsdPipeline>, Failure> {
    let run = source.build()?;
    let backend = run.backend()?;
    let resources = run.resources()?;
    Ok(Box::new(VwsdPipeline {
        run,
        backend,
        resources,
    }))
}

/// Creates a pipeline from a config file, or from defaults when
/// `config_path` is null.
///
/// # Safety
/// `config_path` must be null or a NUL-terminated string; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vwsd_pipeline_new(config_path: *const c_char, out: *mut *mut VwsdPipeline) -> VwsdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let source = match read_opt_path(config_path, "config_path")? {
            Some(p) => ConfigSource::load(&p)?,
            None => ConfigSource::default(),
        };
        *out = Box::into_raw(build_pipeline(source)?);
        Ok(())
    })
}

/// Creates a pipeline from an in-memory TOML config. Relative paths resolve
/// against the working directory.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vwsd_pipeline_new_from_toml(toml: *const c_char, out: *mut *mut VwsdPipeline) -> VwsdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let body = read_str(toml, "toml")?;
        let source = ConfigSource::parse(body, Path::new(""))?;
        *out = Box::into_raw(build_pipeline(source)?);
        Ok(())
    })
}

/// Releases a pipeline. Null is ignored.
///
/// # Safety
/// `pipeline` must come from a `vwsd_pipeline_new*` call and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn vwsd_pipeline_free(pipeline: *mut VwsdPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Ranks ten candidate images for `word` in `phrase`.
///
/// `scores_out` receives the cosine score of each candidate in input order
/// and `order_out` the candidate indices by descending score. Both must
/// hold `n_images` elements; `n_images` must be 10.
///
/// # Safety
/// All pointers must be valid; `image_paths` must hold `n_images`
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn vwsd_predict(
    pipeline: *const VwsdPipeline,
    word: *const c_char,
    phrase: *const c_char,
    image_paths: *const *const c_char,
    n_images: usize,
    scores_out: *mut f64,
    order_out: *mut usize,
) -> VwsdStatus {
    guard(|| {
        let p = pipeline.as_ref().ok_or_else(|| null("pipeline"))?;
        if image_paths.is_null() || scores_out.is_null() || order_out.is_null() {
            return Err(null("image_paths, scores_out or order_out"));
        }
        if n_images != CANDIDATES {
            return Err(VwsdError::CandidateCount {
                expected: CANDIDATES,
                actual: n_images,
            }
            .into());
        }
        let word = read_str(word, "word")?;
        let phrase = read_str(phrase, "phrase")?;
        let mut images = Vec::with_capacity(n_images);
        for i in 0..n_images {
            let path = PathBuf::from(read_str(*image_paths.add(i), "image path")?);
            let key = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            images.push((key, decode_image(&path)?));
        }
        let ranking = predict(word, phrase, &images, &p.run.pipeline, p.backend.as_ref(), &p.resources)?;
        std::slice::from_raw_parts_mut(scores_out, n_images).copy_from_slice(&ranking.scores);
        std::slice::from_raw_parts_mut(order_out, n_images).copy_from_slice(&ranking.order);
        Ok(())
    })
}

/// Evaluates a dataset and returns the JSON report through `json_out`.
/// `gold` is required; `images` may be null to use the data file's
/// directory.
///
/// # Safety
/// String arguments must be null (where allowed) or NUL-terminated;
/// `json_out` must be valid. Free the result with `vwsd_string_free`.
#[no_mangle]
pub unsafe extern "C" fn vwsd_evaluate_json(
    pipeline: *const VwsdPipeline,
    data: *const c_char,
    gold: *const c_char,
    images: *const c_char,
    json_out: *mut *mut c_char,
) -> VwsdStatus {
    guard(|| {
        let p = pipeline.as_ref().ok_or_else(|| null("pipeline"))?;
        if json_out.is_null() {
            return Err(null("json_out"));
        }
        *json_out = ptr::null_mut();
        let data = PathBuf::from(read_str(data, "data")?);
        let gold = PathBuf::from(read_str(gold, "gold")?);
        let root = match read_opt_path(images, "images")? {
            Some(r) => r,
            None => data.parent().unwrap_or(Path::new(".")).to_path_buf(),
        };
        let set = load_dataset(&data, Some(&gold), &root, SplitName::Custom)?;
        set.validate()?;
        let report = evaluate(&set, &p.run.pipeline, p.backend.as_ref(), &p.resources)?;
        let json = report.to_json()?;
        *json_out = CString::new(json)
            .map_err(|_| Failure(VwsdStatus::Runtime, "report contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}

unsafe fn rank_slice<'a>(ranks: *const usize, n: usize) -> Result<&'a [usize], Failure> {
    if ranks.is_null() {
        return Err(null("ranks"));
    }
    Ok(std::slice::from_raw_parts(ranks, n))
}

/// Mean reciprocal rank of `n` 1-based ranks.
///
/// # Safety
/// `ranks` must point to `n` values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vwsd_compute_mrr(ranks: *const usize, n: usize, out: *mut f64) -> VwsdStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = compute_mrr(rank_slice(ranks, n)?)?;
        Ok(())
    })
}

/// Fraction of `n` 1-based ranks equal to 1.
///
/// # Safety
/// `ranks` must point to `n` values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vwsd_compute_hit_rate(ranks: *const usize, n: usize, out: *mut f64) -> VwsdStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = compute_hit_rate(rank_slice(ranks, n)?)?;
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn vwsd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vwsd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of candidate images per query.
#[no_mangle]
pub extern "C" fn vwsd_candidate_count() -> usize {
    CANDIDATES
}
