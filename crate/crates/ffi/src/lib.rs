//! C ABI over the `psla` crate.
//!
//! Every fallible function returns a [`PslaStatus`]; on failure a message is
//! kept per thread and can be copied out with [`psla_last_error_message`].
//! Corpora and evaluation reports are opaque handles released with their
//! `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use psla::corpus::{generate_synthetic, read_corpus};
use psla::experiment::{run_train, ExperimentConfig, ExperimentError};
use psla::metrics::{average_precision, d_prime, evaluate, roc_auc, EvalReport, MetricsError};
use psla::sampler::make_weights;
use psla::{LabelMatrix, Matrix, MultiLabelCorpus, SynthSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PslaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The metric is undefined for the input, e.g. a class without positives.
    Undefined = 3,
    Io = 4,
    Config = 5,
    Numerical = 6,
    Panic = 7,
    Failed = 8,
}

/// An in-memory multi-label corpus.
pub struct PslaCorpus(MultiLabelCorpus);

/// Metrics for one prediction matrix.
pub struct PslaReport(EvalReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl std::fmt::Display) {
    let s = CString::new(msg.to_string().replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn fail(status: PslaStatus, msg: impl std::fmt::Display) -> PslaStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> PslaStatus) -> PslaStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(PslaStatus::Panic, "panic inside psla"))
}

fn metrics_status(e: &MetricsError) -> PslaStatus {
    match e {
        MetricsError::Undefined(_) | MetricsError::AllDegenerate => PslaStatus::Undefined,
        MetricsError::NonFinite => PslaStatus::Numerical,
        _ => PslaStatus::InvalidArgument,
    }
}

fn experiment_status(e: &ExperimentError) -> PslaStatus {
    match e.exit_code() {
        2 => PslaStatus::Config,
        3 => PslaStatus::Numerical,
        _ => match e {
            ExperimentError::Io { .. } => PslaStatus::Io,
            _ => PslaStatus::Failed,
        },
    }
}

macro_rules! nonnull {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(PslaStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Copies the calling thread's last error message into `buf` (always
/// nul-terminated when `len > 0`) and returns the full message length, or 0
/// when there is none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn psla_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn psla_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

unsafe fn as_labels(labels: *const u8, n: usize) -> Vec<bool> {
    std::slice::from_raw_parts(labels, n).iter().map(|&b| b != 0).collect()
}

/// Non-interpolated average precision of one class.
///
/// # Safety
/// `scores` and `labels` must point to `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn psla_average_precision(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> PslaStatus {
    nonnull!(scores, labels, out);
    guard(|| {
        let s = std::slice::from_raw_parts(scores, n);
        match average_precision(s, &as_labels(labels, n)) {
            Ok(v) => {
                *out = v;
                PslaStatus::Ok
            }
            Err(e) => fail(metrics_status(&e), e),
        }
    })
}

/// Area under the ROC curve of one class.
///
/// # Safety
/// As for [`psla_average_precision`].
#[no_mangle]
pub unsafe extern "C" fn psla_roc_auc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> PslaStatus {
    nonnull!(scores, labels, out);
    guard(|| {
        let s = std::slice::from_raw_parts(scores, n);
        match roc_auc(s, &as_labels(labels, n)) {
            Ok(v) => {
                *out = v;
                PslaStatus::Ok
            }
            Err(e) => fail(metrics_status(&e), e),
        }
    })
}

/// Sensitivity index for an AUC in (0, 1).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn psla_d_prime(auc: f64, out: *mut f64) -> PslaStatus {
    nonnull!(out);
    match d_prime(auc) {
        Ok(v) => {
            *out = v;
            PslaStatus::Ok
        }
        Err(e) => fail(PslaStatus::InvalidArgument, e),
    }
}

/// Evaluates a row-major `rows x cols` prediction matrix against 0/1 labels
/// of the same layout.
///
/// # Safety
/// `predictions` and `labels` must hold `rows * cols` values; `out` must be
/// writable. The returned report is released with [`psla_report_free`].
#[no_mangle]
pub unsafe extern "C" fn psla_evaluate(
    predictions: *const f64,
    labels: *const u8,
    rows: usize,
    cols: usize,
    out: *mut *mut PslaReport,
) -> PslaStatus {
    nonnull!(predictions, labels, out);
    guard(|| {
        let Some(len) = rows.checked_mul(cols) else {
            return fail(PslaStatus::InvalidArgument, "rows * cols overflows");
        };
        let p = std::slice::from_raw_parts(predictions, len).to_vec();
        let l = std::slice::from_raw_parts(labels, len);
        let preds = match Matrix::from_vec(rows, cols, p) {
            Ok(m) => m,
            Err(e) => return fail(PslaStatus::InvalidArgument, e),
        };
        let mut lm = LabelMatrix::new(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                lm.set(r, c, l[r * cols + c] != 0);
            }
        }
        match evaluate(&preds, &lm) {
            Ok(report) => {
                *out = Box::into_raw(Box::new(PslaReport(report)));
                PslaStatus::Ok
            }
            Err(e) => fail(metrics_status(&e), e),
        }
    })
}

/// Mean AP over classes with at least one positive.
///
/// # Safety
/// `report` must come from [`psla_evaluate`].
#[no_mangle]
pub unsafe extern "C" fn psla_report_map(report: *const PslaReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.map)
}

/// Number of classes in the report.
///
/// # Safety
/// `report` must come from [`psla_evaluate`].
#[no_mangle]
pub unsafe extern "C" fn psla_report_num_classes(report: *const PslaReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.per_class_ap.len())
}

/// AP of class `k`; `PSLA_STATUS_UNDEFINED` for a class without positives.
///
/// # Safety
/// `report` must come from [`psla_evaluate`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn psla_report_class_ap(
    report: *const PslaReport,
    k: usize,
    out: *mut f64,
) -> PslaStatus {
    nonnull!(report, out);
    let r = &(*report).0;
    match r.per_class_ap.get(k) {
        None => fail(PslaStatus::InvalidArgument, format!("class {k} out of range")),
        Some(None) => fail(PslaStatus::Undefined, format!("class {k} has no positives")),
        Some(Some(v)) => {
            *out = *v;
            PslaStatus::Ok
        }
    }
}

/// Mean AUC and d-prime; either may be undefined.
///
/// # Safety
/// `report` must come from [`psla_evaluate`]; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn psla_report_auc(
    report: *const PslaReport,
    mean_auc: *mut f64,
    d_prime: *mut f64,
) -> PslaStatus {
    nonnull!(report, mean_auc, d_prime);
    let r = &(*report).0;
    match (r.mean_auc, r.d_prime) {
        (Some(a), Some(d)) => {
            *mean_auc = a;
            *d_prime = d;
            PslaStatus::Ok
        }
        (a, _) => {
            *mean_auc = a.unwrap_or(f64::NAN);
            *d_prime = f64::NAN;
            fail(PslaStatus::Undefined, "mean AUC or d-prime undefined")
        }
    }
}

/// # Safety
/// `report` must be null or come from [`psla_evaluate`], and is invalid
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn psla_report_free(report: *mut PslaReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Reads a corpus directory.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn psla_corpus_read(path: *const c_char, out: *mut *mut PslaCorpus) -> PslaStatus {
    nonnull!(path, out);
    guard(|| {
        let Ok(p) = CStr::from_ptr(path).to_str() else {
            return fail(PslaStatus::InvalidArgument, "path is not UTF-8");
        };
        match read_corpus(Path::new(p)) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(PslaCorpus(c)));
                PslaStatus::Ok
            }
            Err(e) => fail(PslaStatus::Io, e),
        }
    })
}

/// Generates a synthetic long-tailed corpus with default feature settings.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn psla_corpus_synthetic(
    num_classes: usize,
    num_samples: usize,
    imbalance_ratio: f64,
    seed: u64,
    out: *mut *mut PslaCorpus,
) -> PslaStatus {
    nonnull!(out);
    guard(|| {
        let spec = SynthSpec {
            num_classes,
            num_samples,
            imbalance_ratio,
            seed,
            ..SynthSpec::default()
        };
        match generate_synthetic(&spec) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(PslaCorpus(c)));
                PslaStatus::Ok
            }
            Err(e) => fail(PslaStatus::InvalidArgument, e),
        }
    })
}

/// # Safety
/// `corpus` must come from a `psla_corpus_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn psla_corpus_len(corpus: *const PslaCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `corpus` must come from a `psla_corpus_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn psla_corpus_num_classes(corpus: *const PslaCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.num_classes())
}

/// Writes the per-class sample counts into `counts[0..len]`.
///
/// # Safety
/// `corpus` must be a live handle; `counts` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn psla_corpus_class_counts(
    corpus: *const PslaCorpus,
    counts: *mut usize,
    len: usize,
) -> PslaStatus {
    nonnull!(corpus, counts);
    let c = &(*corpus).0.class_table().counts;
    if len != c.len() {
        return fail(PslaStatus::InvalidArgument, format!("need {} slots, got {len}", c.len()));
    }
    ptr::copy_nonoverlapping(c.as_ptr(), counts, len);
    PslaStatus::Ok
}

/// Writes the balanced-sampling weight of every sample into
/// `weights[0..len]`.
///
/// # Safety
/// `corpus` must be a live handle; `weights` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn psla_corpus_sampling_weights(
    corpus: *const PslaCorpus,
    weights: *mut f64,
    len: usize,
) -> PslaStatus {
    nonnull!(corpus, weights);
    guard(|| {
        let c = &(*corpus).0;
        if len != c.len() {
            return fail(PslaStatus::InvalidArgument, format!("need {} slots, got {len}", c.len()));
        }
        match make_weights(c.class_table(), &c.label_sets()) {
            Ok(w) => {
                ptr::copy_nonoverlapping(w.as_slice().as_ptr(), weights, len);
                PslaStatus::Ok
            }
            Err(e) => fail(PslaStatus::InvalidArgument, e),
        }
    })
}

/// # Safety
/// `corpus` must be null or a live handle, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn psla_corpus_free(corpus: *mut PslaCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Trains the experiment described by a TOML config file and writes the
/// run's headline mAP (ensemble, else weight-averaged, else last-k mean).
///
/// # Safety
/// `config_path` must be a nul-terminated string; `headline_map` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn psla_train(config_path: *const c_char, headline_map: *mut f64) -> PslaStatus {
    nonnull!(config_path, headline_map);
    guard(|| {
        let Ok(p) = CStr::from_ptr(config_path).to_str() else {
            return fail(PslaStatus::InvalidArgument, "path is not UTF-8");
        };
        match ExperimentConfig::read(Path::new(p)).and_then(|c| run_train(&c)) {
            Ok(s) => {
                *headline_map = s.headline();
                PslaStatus::Ok
            }
            Err(e) => fail(experiment_status(&e), e),
        }
    })
}
