//! C ABI for txfidelity.
//!
//! Objects cross the boundary as opaque handles created by `*_load` /
//! `*_compute` functions and released by the matching `*_free`. Every
//! fallible function returns a [`TxfStatus`] and writes its result through an
//! out pointer. On failure, [`txf_last_error`] describes what went wrong on
//! the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use txfidelity::entity::{assign_entities, size_distribution, AssignMode, DEFAULT_ENTITY_COLUMN};
use txfidelity::ingest::{build_entity_sequences, load_synthetic, load_table, ClassMode, SchemaConfig, TransactionTable};
use txfidelity::oracle::{fit_marginals, generate_rowindep};
use txfidelity::scoring::{composite, evaluate, noise_floor, BaselineScores, DegradationReport, EvalConfig, MetricId};
use txfidelity::Error;

/// Status codes. 2-5 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxfStatus {
    Ok = 0,
    /// A required pointer was null or a string was not UTF-8.
    InvalidPointer = 1,
    /// Bad input file, schema, CSV or argument.
    Usage = 2,
    /// Not enough data for the requested metric.
    InsufficientData = 3,
    /// Baseline belongs to a different real table.
    FingerprintMismatch = 4,
    /// Schema, pattern or settings incompatibility.
    Incompatible = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 99,
}

/// A schema mapping CSV columns to roles.
pub struct TxfSchema(SchemaConfig);

/// An ingested transaction table.
pub struct TxfTable(TransactionTable);

/// Noise-floor baseline scores.
pub struct TxfBaseline(BaselineScores);

/// Degradation report.
pub struct TxfReport(DegradationReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> TxfStatus {
    match e.exit_code() {
        3 => TxfStatus::InsufficientData,
        4 => TxfStatus::FingerprintMismatch,
        5 => TxfStatus::Incompatible,
        _ => TxfStatus::Usage,
    }
}

enum Fault {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fault {
    fn from(e: Error) -> Self {
        Fault::Lib(e)
    }
}

/// Run `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fault>) -> TxfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TxfStatus::Ok,
        Ok(Err(Fault::Null(what))) => {
            set_error(format!("{what} is null or not valid UTF-8"));
            TxfStatus::InvalidPointer
        }
        Ok(Err(Fault::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TxfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fault> {
    if p.is_null() {
        return Err(Fault::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fault::Null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fault> {
    p.as_ref().ok_or(Fault::Null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Fault> {
    let c = CString::new(s).map_err(|_| Fault::Lib(Error::InvalidArgument("string contains NUL".into())))?;
    // SAFETY: checked non-null by the caller
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn txf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failure on this thread. Valid until the next failing
/// call on the same thread; never null.
#[no_mangle]
pub extern "C" fn txf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Free a string returned through an out pointer. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn txf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a `key = value` schema file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn txf_schema_load(path: *const c_char, out: *mut *mut TxfSchema) -> TxfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(Fault::Null("out"));
        }
        put(out, TxfSchema(SchemaConfig::load(path)?));
        Ok(())
    })
}

/// Parse schema text.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn txf_schema_parse(text: *const c_char, out: *mut *mut TxfSchema) -> TxfStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(Fault::Null("out"));
        }
        put(out, TxfSchema(SchemaConfig::parse(text)?));
        Ok(())
    })
}

/// # Safety
/// `schema` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn txf_schema_free(schema: *mut TxfSchema) {
    if !schema.is_null() {
        drop(Box::from_raw(schema));
    }
}

/// Load a real table. Every schema-referenced column must exist.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn txf_table_load(
    path: *const c_char,
    schema: *const TxfSchema,
    out: *mut *mut TxfTable,
) -> TxfStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let schema = handle(schema, "schema")?;
        if out.is_null() {
            return Err(Fault::Null("out"));
        }
        put(out, TxfTable(load_table(path, &schema.0)?));
        Ok(())
    })
}

/// Load a synthetic table; a missing entity column is allowed.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn txf_table_load_synthetic(
    path: *const c_char,
    schema: *const TxfSchema,
    out: *mut *mut TxfTable,
) -> TxfStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let schema = handle(schema, "schema")?;
        if out.is_null() {
            return Err(Fault::Null("out"));
        }
        put(out, TxfTable(load_synthetic(path, &schema.0)?));
        Ok(())
    })
}

/// Row count; 0 for a null handle.
///
/// # Safety
/// `table` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn txf_table_n_rows(table: *const TxfTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.n_rows())
}

/// Whether the table has a bound entity column.
///
/// # Safety
/// `table` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn txf_table_has_entities(table: *const TxfTable) -> bool {
    table.as_ref().is_some_and(|t| t.0.entity_column().is_some())
}

/// Write the table as CSV.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn txf_table_write_csv(table: *const TxfTable, path: *const c_char) -> TxfStatus {
    guard(|| {
        let table = handle(table, "table")?;
        let path = str_arg(path, "path")?;
        table.0.write_csv(path, &[])?;
        Ok(())
    })
}

/// # Safety
/// `table` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn txf_table_free(table: *mut TxfTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Row-independent table drawn from the column marginals of `real`.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn txf_oracle_generate(
    real: *const TxfTable,
    n_rows: usize,
    seed: u64,
    out: *mut *mut TxfTable,
) -> TxfStatus {
    guard(|| {
        let real = handle(real, "real")?;
        if out.is_null() {
            return Err(Fault::Null("out"));
        }
        let model = fit_marginals(&real.0)?;
        put(out, TxfTable(generate_rowindep(&model, n_rows, seed)?));
        Ok(())
    })
}

/// Label `syn` with pseudo-entities drawn from the entity sizes of `real`.
/// `permuted` selects the shuffled mode.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn txf_assign_entities(
    syn: *const TxfTable,
    real: *const TxfTable,
    seed: u64,
    permuted: bool,
    out: *mut *mut TxfTable,
) -> TxfStatus {
    guard(|| {
        let syn = handle(syn, "syn")?;
        let real = handle(real, "real")?;
        if out.is_null() {
            return Err(Fault::Null("out"));
        }
        let dist = size_distribution(&build_entity_sequences(&real.0, ClassMode::SplitByClass)?)?;
        let mode = if permuted { AssignMode::Permuted } else { AssignMode::Consecutive };
        let column = real.0.schema().entity_col.clone().unwrap_or_else(|| DEFAULT_ENTITY_COLUMN.into());
        let (labeled, _) = assign_entities(&syn.0, &dist, seed, mode, &column)?;
        put(out, TxfTable(labeled));
        Ok(())
    })
}

/// Noise floor of `real` with default settings and every applicable pattern.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn txf_baseline_compute(
    real: *const TxfTable,
    seed: u64,
    out: *mut *mut TxfBaseline,
) -> TxfStatus {
    guard(|| {
        let real = handle(real, "real")?;
        if out.is_null() {
            return Err(Fault::Null("out"));
        }
        put(out, TxfBaseline(noise_floor(&real.0, seed, &EvalConfig::default())?));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn txf_baseline_load(path: *const c_char, out: *mut *mut TxfBaseline) -> TxfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(Fault::Null("out"));
        }
        put(out, TxfBaseline(BaselineScores::load(path)?));
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn txf_baseline_save(baseline: *const TxfBaseline, path: *const c_char) -> TxfStatus {
    guard(|| {
        let b = handle(baseline, "baseline")?;
        b.0.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Baseline as JSON; free with [`txf_string_free`].
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn txf_baseline_to_json(baseline: *const TxfBaseline, out: *mut *mut c_char) -> TxfStatus {
    guard(|| {
        let b = handle(baseline, "baseline")?;
        if out.is_null() {
            return Err(Fault::Null("out"));
        }
        out_string(out, b.0.to_json()?)
    })
}

/// # Safety
/// `baseline` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn txf_baseline_free(baseline: *mut TxfBaseline) {
    if !baseline.is_null() {
        drop(Box::from_raw(baseline));
    }
}

/// Evaluate `syn` against `real`, using the baseline's settings and patterns.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn txf_evaluate(
    real: *const TxfTable,
    syn: *const TxfTable,
    baseline: *const TxfBaseline,
    out: *mut *mut TxfReport,
) -> TxfStatus {
    guard(|| {
        let real = handle(real, "real")?;
        let syn = handle(syn, "syn")?;
        let b = handle(baseline, "baseline")?;
        if out.is_null() {
            return Err(Fault::Null("out"));
        }
        let config = EvalConfig {
            settings: b.0.settings.clone(),
            split_mode: b.0.split_mode,
            ..EvalConfig::default()
        };
        put(out, TxfReport(evaluate(&real.0, &syn.0, &b.0, &config, None)?));
        Ok(())
    })
}

/// Composite score of the report. `InsufficientData` when undefined.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn txf_report_composite(report: *const TxfReport, out: *mut f64) -> TxfStatus {
    guard(|| {
        let r = handle(report, "report")?;
        if out.is_null() {
            return Err(Fault::Null("out"));
        }
        let c = r.0.composite.ok_or_else(|| Error::InsufficientData("composite is undefined".into()))?;
        *out = c;
        Ok(())
    })
}

/// Degradation ratio of one sub-metric, by id (e.g. `"p1_autocorr_gap"`).
/// `InsufficientData` when the metric was not computed or its noise floor
/// is zero.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn txf_report_ratio(
    report: *const TxfReport,
    metric: *const c_char,
    out: *mut f64,
) -> TxfStatus {
    guard(|| {
        let r = handle(report, "report")?;
        let id: MetricId = str_arg(metric, "metric")?.parse()?;
        if out.is_null() {
            return Err(Fault::Null("out"));
        }
        let ratio = r
            .0
            .metric(id)
            .and_then(|m| m.ratio)
            .ok_or_else(|| Error::InsufficientData(format!("{} has no ratio in this report", id.id())))?;
        *out = ratio;
        Ok(())
    })
}

/// Report as JSON; free with [`txf_string_free`].
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn txf_report_to_json(report: *const TxfReport, out: *mut *mut c_char) -> TxfStatus {
    guard(|| {
        let r = handle(report, "report")?;
        if out.is_null() {
            return Err(Fault::Null("out"));
        }
        out_string(out, r.0.to_json()?)
    })
}

/// # Safety
/// `report` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn txf_report_free(report: *mut TxfReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Equal-weight mean of `n` ratios.
///
/// # Safety
/// `ratios` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn txf_composite(ratios: *const f64, n: usize, out: *mut f64) -> TxfStatus {
    guard(|| {
        if ratios.is_null() && n > 0 {
            return Err(Fault::Null("ratios"));
        }
        if out.is_null() {
            return Err(Fault::Null("out"));
        }
        let slice = if n == 0 { &[][..] } else { std::slice::from_raw_parts(ratios, n) };
        *out = composite(slice, None)?;
        Ok(())
    })
}
