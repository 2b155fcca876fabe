//! C ABI over the `finegrain` library.
//!
//! Every fallible function returns an [`FgStatus`]; on failure the message
//! is available from [`fg_last_error`] on the same thread. Handles are
//! opaque and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use finegrain::adaptive::{select_queries, CostModel, QueryCandidate};
use finegrain::distance::{GaussianBank, NeighborBank};
use finegrain::dynamic::{classify_dynamic_surrogate, DynamicTag};
use finegrain::io::fdbk::{decode_fdbk, read_fdbk};
use finegrain::pipeline::FittedModel;
use finegrain::record::{Domain, FeatureRecord, ProbabilityVector};
use finegrain::taxonomy::{entropy, StaticTag};
use finegrain::Error;

/// Status codes; the numeric values match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FgStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    Numerical = 3,
    DegenerateTaxonomy = 4,
    UnusableCalibration = 5,
    UndefinedCorrelation = 6,
    BadMagic = 10,
    VersionMismatch = 11,
    Truncated = 12,
    TrailingData = 13,
    LabelsAbsent = 14,
    Config = 20,
    Parse = 21,
    Io = 30,
    Panic = 99,
}

impl From<&Error> for FgStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Validation(_) => FgStatus::Validation,
            Error::Numerical(_) => FgStatus::Numerical,
            Error::DegenerateTaxonomy(_) => FgStatus::DegenerateTaxonomy,
            Error::UnusableCalibration(_) => FgStatus::UnusableCalibration,
            Error::UndefinedCorrelation(_) => FgStatus::UndefinedCorrelation,
            Error::BadMagic { .. } => FgStatus::BadMagic,
            Error::VersionMismatch { .. } => FgStatus::VersionMismatch,
            Error::Truncated { .. } => FgStatus::Truncated,
            Error::TrailingData { .. } => FgStatus::TrailingData,
            Error::LabelsAbsent => FgStatus::LabelsAbsent,
            Error::Config(_) => FgStatus::Config,
            Error::Parse(_) => FgStatus::Parse,
            Error::Io(_) => FgStatus::Io,
        }
    }
}

/// Static taxonomy codes.
pub const FG_STATIC_C: u8 = 0;
pub const FG_STATIC_UA: u8 = 1;
pub const FG_STATIC_UE: u8 = 2;

/// Dynamic taxonomy codes.
pub const FG_DYNAMIC_C: u8 = 0;
pub const FG_DYNAMIC_UAR: u8 = 1;
pub const FG_DYNAMIC_UAI: u8 = 2;
pub const FG_DYNAMIC_UE: u8 = 3;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: FgStatus, msg: impl Into<String>) -> FgStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, converting library errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (FgStatus, String)>) -> FgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FgStatus::Ok,
        Ok(Err((s, m))) => fail(s, m),
        Err(_) => fail(FgStatus::Panic, "internal panic"),
    }
}

fn lib(e: Error) -> (FgStatus, String) {
    (FgStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (FgStatus, String) {
    (FgStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn view<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (FgStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or valid for `len` writes.
unsafe fn view_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], (FgStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Shannon entropy in nats of a probability vector.
///
/// # Safety
/// `probs` must point to `n_classes` doubles and `out` to one double.
#[no_mangle]
pub unsafe extern "C" fn fg_entropy(probs: *const f64, n_classes: usize, out: *mut f64) -> FgStatus {
    guard(|| {
        let p = view(probs, n_classes, "probs")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let pv = ProbabilityVector::new(p.to_vec()).map_err(lib)?;
        *out = entropy(&pv);
        Ok(())
    })
}

/// Gaussian prototype bank (per-group means, shared covariance).
pub struct FgGaussianBank(GaussianBank);

/// Fits a bank on `n` row-major `d`-vectors with one group id per row.
///
/// # Safety
/// `rows` must hold `n * d` doubles, `groups` `n` ids; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fg_gaussian_bank_fit(
    rows: *const f64,
    n: usize,
    d: usize,
    groups: *const u32,
    shrinkage: f64,
    out: *mut *mut FgGaussianBank,
) -> FgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if d == 0 {
            return Err((FgStatus::Validation, "dimension must be positive".into()));
        }
        let flat = view(rows, n * d, "rows")?;
        let g = view(groups, n, "groups")?;
        let rows: Vec<&[f64]> = flat.chunks_exact(d).collect();
        let bank = GaussianBank::fit(&rows, g, shrinkage).map_err(lib)?;
        *out = Box::into_raw(Box::new(FgGaussianBank(bank)));
        Ok(())
    })
}

/// Dimension of the bank's vectors (0 for a null handle).
///
/// # Safety
/// `bank` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fg_gaussian_bank_dim(bank: *const FgGaussianBank) -> usize {
    bank.as_ref().map_or(0, |b| b.0.dim())
}

/// Mahalanobis distance to the nearest centroid and that centroid's group.
///
/// # Safety
/// `bank` must be a live handle, `z` hold `d` doubles, outputs be valid.
#[no_mangle]
pub unsafe extern "C" fn fg_gaussian_bank_score(
    bank: *const FgGaussianBank,
    z: *const f64,
    d: usize,
    score: *mut f64,
    group: *mut u32,
) -> FgStatus {
    guard(|| {
        let b = bank.as_ref().ok_or_else(|| null("bank"))?;
        let z = view(z, d, "z")?;
        if score.is_null() {
            return Err(null("score"));
        }
        let (s, g) = b.0.score(z).map_err(lib)?;
        *score = s;
        if !group.is_null() {
            *group = g;
        }
        Ok(())
    })
}

/// Scores `n` row-major vectors. `groups` may be null.
///
/// # Safety
/// `rows` must hold `n * d` doubles, `scores` (and `groups` if non-null)
/// room for `n` values.
#[no_mangle]
pub unsafe extern "C" fn fg_gaussian_bank_score_batch(
    bank: *const FgGaussianBank,
    rows: *const f64,
    n: usize,
    d: usize,
    scores: *mut f64,
    groups: *mut u32,
) -> FgStatus {
    guard(|| {
        let b = bank.as_ref().ok_or_else(|| null("bank"))?;
        if d != b.0.dim() {
            return Err((FgStatus::Validation, format!("dimension {d}, bank expects {}", b.0.dim())));
        }
        let flat = view(rows, n * d, "rows")?;
        let out = view_mut(scores, n, "scores")?;
        let res = b.0.score_batch(flat).map_err(lib)?;
        for (o, (s, _)) in out.iter_mut().zip(&res) {
            *o = *s;
        }
        if !groups.is_null() {
            let g = view_mut(groups, n, "groups")?;
            for (o, (_, id)) in g.iter_mut().zip(&res) {
                *o = *id;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `bank` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fg_gaussian_bank_free(bank: *mut FgGaussianBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Exact k-th-nearest-neighbor store.
pub struct FgNeighborBank(NeighborBank);

/// # Safety
/// `rows` must hold `n * d` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fg_neighbor_bank_new(
    rows: *const f64,
    n: usize,
    d: usize,
    k: usize,
    unit_norm: bool,
    out: *mut *mut FgNeighborBank,
) -> FgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if d == 0 {
            return Err((FgStatus::Validation, "dimension must be positive".into()));
        }
        let flat = view(rows, n * d, "rows")?;
        let rows: Vec<&[f64]> = flat.chunks_exact(d).collect();
        let bank = NeighborBank::new(&rows, k, unit_norm).map_err(lib)?;
        *out = Box::into_raw(Box::new(FgNeighborBank(bank)));
        Ok(())
    })
}

/// Distance from `z` to its k-th nearest stored point.
///
/// # Safety
/// `bank` must be a live handle, `z` hold `d` doubles, `score` be valid.
#[no_mangle]
pub unsafe extern "C" fn fg_neighbor_bank_score(
    bank: *const FgNeighborBank,
    z: *const f64,
    d: usize,
    score: *mut f64,
) -> FgStatus {
    guard(|| {
        let b = bank.as_ref().ok_or_else(|| null("bank"))?;
        let z = view(z, d, "z")?;
        if score.is_null() {
            return Err(null("score"));
        }
        *score = b.0.score(z).map_err(lib)?;
        Ok(())
    })
}

/// # Safety
/// `bank` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fg_neighbor_bank_free(bank: *mut FgNeighborBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// A fitted model loaded from an FDBK file.
pub struct FgModel(FittedModel);

/// Per-sample result of [`fg_model_classify`]. Distances are NaN unless
/// the static tag is UA.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FgSample {
    pub static_tag: u8,
    pub dynamic_tag: u8,
    pub eu: f64,
    pub entropy: f64,
    pub d_uar: f64,
    pub d_uai: f64,
}

fn boxed_model(m: FittedModel, out: *mut *mut FgModel) {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(FgModel(m))) };
}

/// Loads a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fg_model_load(path: *const c_char, out: *mut *mut FgModel) -> FgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let p = CStr::from_ptr(path).to_str().map_err(|_| (FgStatus::Validation, "path is not UTF-8".into()))?;
        boxed_model(read_fdbk(p).map_err(lib)?, out);
        Ok(())
    })
}

/// Loads a model from an in-memory FDBK buffer.
///
/// # Safety
/// `bytes` must hold `len` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fg_model_load_bytes(bytes: *const u8, len: usize, out: *mut *mut FgModel) -> FgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let b = view(bytes, len, "bytes")?;
        boxed_model(decode_fdbk(b).map_err(lib)?, out);
        Ok(())
    })
}

/// Number of classes (0 for a null handle).
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fg_model_n_classes(model: *const FgModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.n_classes)
}

/// LI feature dimension expected by the model (0 for a null handle).
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fg_model_li_dim(model: *const FgModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.li.eu_bank.dim())
}

fn static_code(t: StaticTag) -> u8 {
    match t {
        StaticTag::C => FG_STATIC_C,
        StaticTag::Ua => FG_STATIC_UA,
        StaticTag::Ue => FG_STATIC_UE,
    }
}

fn dynamic_code(t: DynamicTag) -> u8 {
    match t {
        DynamicTag::C => FG_DYNAMIC_C,
        DynamicTag::Uar => FG_DYNAMIC_UAR,
        DynamicTag::Uai => FG_DYNAMIC_UAI,
        DynamicTag::Ue => FG_DYNAMIC_UE,
    }
}

/// Static LI tag and surrogate dynamic tag of one LI sample.
///
/// # Safety
/// `features` must hold `d` doubles, `probs` `n_classes`; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fg_model_classify(
    model: *const FgModel,
    features: *const f64,
    d: usize,
    probs: *const f64,
    n_classes: usize,
    out: *mut FgSample,
) -> FgStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let f = view(features, d, "features")?;
        let p = view(probs, n_classes, "probs")?;
        if n_classes != m.n_classes {
            return Err((FgStatus::Validation, format!("{n_classes} classes, model has {}", m.n_classes)));
        }
        let pv = ProbabilityVector::new(p.to_vec()).map_err(lib)?;
        let rec = FeatureRecord::new(f.to_vec(), pv, Domain::Li).map_err(lib)?;
        let label = m.li.static_label(&rec).map_err(lib)?;
        let sur = classify_dynamic_surrogate(&rec, &label, &m.resolvability).map_err(lib)?;
        *out = FgSample {
            static_tag: static_code(label.tag),
            dynamic_tag: dynamic_code(sur.label.tag),
            eu: label.eu_score,
            entropy: entropy(&rec.probs),
            d_uar: sur.d_uar.unwrap_or(f64::NAN),
            d_uai: sur.d_uai.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fg_model_free(model: *mut FgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Fine-grained query selection: UAR samples by ascending `ranking`, cut
/// at `budget` (total cost, LI pass included; NaN for no limit). Writes
/// the selected indices in query order to `out_indices` (room for `n`) and
/// their number to `out_count`.
///
/// # Safety
/// `dynamic_tags` and `ranking` must hold `n` values, `out_indices` room
/// for `n`, `out_count` be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn fg_select_queries(
    dynamic_tags: *const u8,
    ranking: *const f64,
    n: usize,
    t_li: f64,
    t_hi: f64,
    budget: f64,
    out_indices: *mut usize,
    out_count: *mut usize,
) -> FgStatus {
    guard(|| {
        if out_count.is_null() {
            return Err(null("out_count"));
        }
        let tags = view(dynamic_tags, n, "dynamic_tags")?;
        let rank = view(ranking, n, "ranking")?;
        let out = view_mut(out_indices, n, "out_indices")?;
        let cost = CostModel::new(t_li, t_hi).map_err(lib)?;
        let mut candidates = Vec::with_capacity(n);
        for (i, (&t, &r)) in tags.iter().zip(rank).enumerate() {
            let tag = match t {
                FG_DYNAMIC_C => DynamicTag::C,
                FG_DYNAMIC_UAR => DynamicTag::Uar,
                FG_DYNAMIC_UAI => DynamicTag::Uai,
                FG_DYNAMIC_UE => DynamicTag::Ue,
                other => return Err((FgStatus::Validation, format!("sample {i}: unknown tag code {other}"))),
            };
            let static_li = if matches!(tag, DynamicTag::Uar | DynamicTag::Uai) {
                StaticTag::Ua
            } else if tag == DynamicTag::Ue {
                StaticTag::Ue
            } else {
                StaticTag::C
            };
            candidates.push(QueryCandidate { tag, static_li, ranking: r.is_finite().then_some(r), entropy: 0.0 });
        }
        let budget = (!budget.is_nan()).then_some(budget);
        let plan = select_queries(&candidates, &cost, budget).map_err(lib)?;
        out[..plan.selected.len()].copy_from_slice(&plan.selected);
        *out_count = plan.selected.len();
        Ok(())
    })
}
