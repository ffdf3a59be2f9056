//! C ABI over `agreesim`.
//!
//! Objects cross the boundary as opaque handles returned through `out`
//! parameters and released with the matching `*_free`.
//! Every fallible call returns an [`AgsStatus`]; on failure a message is
//! available from [`ags_last_error`] on the same thread until the next
//! failing call. Strings returned as `char *` must be released with
//! [`ags_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use agreesim::conflation::learn_conflation;
use agreesim::label::{agreement_probability, load_dataset, load_dataset_file};
use agreesim::metrics::{auc, MetricInput};
use agreesim::simulate::{
    assess_claim, percentile_sorted, run_simulation_with_jobs, Jobs, SimulationRun,
};
use agreesim::synth::{generate, AnnotatorCount, SynthConfig};
use agreesim::{
    ConflationMatrix, Dataset, DatasetFormat, Error, FlipSpace, SimulationConfig, Verdict,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Validation = 5,
    Config = 6,
    Undefined = 7,
    Io = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgsVerdict {
    BelowBand = 0,
    WithinBand = 1,
    AboveBand = 2,
}

impl From<Verdict> for AgsVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::BelowBand => AgsVerdict::BelowBand,
            Verdict::WithinBand => AgsVerdict::WithinBand,
            Verdict::AboveBand => AgsVerdict::AboveBand,
        }
    }
}

/// Opaque multi-annotator dataset.
pub struct AgsDataset(Dataset);

/// Opaque label conflation matrix.
pub struct AgsMatrix(ConflationMatrix);

/// Opaque simulation result: report plus sorted samples.
pub struct AgsRun(SimulationRun);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(CString::new(message).expect("interior NULs removed"));
    });
}

fn status_of(err: &Error) -> AgsStatus {
    match err {
        Error::Parse { .. } | Error::Json(_) => AgsStatus::Parse,
        Error::Validation { .. } | Error::Scheme(_) | Error::EmptyDataset => AgsStatus::Validation,
        Error::ModelSyntax { .. }
        | Error::Config(_)
        | Error::UnknownMetric(_)
        | Error::SuiteFailed { .. } => AgsStatus::Config,
        Error::AgreementUndefined
        | Error::ConflationUnlearnable
        | Error::MetricUndefined(_)
        | Error::AllTrialsUndefined(_)
        | Error::EmptySamples => AgsStatus::Undefined,
        Error::MetricInput(_) => AgsStatus::InvalidArgument,
        Error::Io(_) => AgsStatus::Io,
    }
}

struct Failure(AgsStatus, String);

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure(status_of(&err), err.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AgsStatus::NullPointer, format!("{what} is NULL"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AgsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AgsStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            AgsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure(AgsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(text: String) -> *mut c_char {
    CString::new(text.replace('\0', " "))
        .expect("interior NULs removed")
        .into_raw()
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn ags_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ags_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ags_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a jsonl dataset (scheme header line first) from a string.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_dataset_from_jsonl(
    text: *const c_char,
    out: *mut *mut AgsDataset,
) -> AgsStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let dataset = load_dataset(text.as_bytes(), DatasetFormat::Jsonl, None)?;
        write_out(out, Box::into_raw(Box::new(AgsDataset(dataset))), "out")
    })
}

/// Loads a dataset file. `format` is "jsonl", "tsv", "csv" or NULL to infer
/// from the extension. Tabular files need `scheme_path`; it may be NULL for
/// jsonl files with a scheme header.
///
/// # Safety
/// String arguments must be NUL-terminated or NULL where allowed; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_dataset_load(
    path: *const c_char,
    format: *const c_char,
    scheme_path: *const c_char,
    out: *mut *mut AgsDataset,
) -> AgsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let format = if format.is_null() {
            DatasetFormat::from_path(path.as_ref())
        } else {
            str_arg(format, "format")?.parse()?
        };
        let scheme = if scheme_path.is_null() {
            None
        } else {
            Some(agreesim::LabelScheme::from_json_file(str_arg(
                scheme_path,
                "scheme_path",
            )?)?)
        };
        let dataset = load_dataset_file(path, format, scheme.as_ref())?;
        write_out(out, Box::into_raw(Box::new(AgsDataset(dataset))), "out")
    })
}

/// # Safety
/// `dataset` must come from this library and not have been freed. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn ags_dataset_free(dataset: *mut AgsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of documents, or 0 for NULL.
///
/// # Safety
/// `dataset` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ags_dataset_len(dataset: *const AgsDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// Serializes the dataset as jsonl. Free the result with `ags_string_free`.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_dataset_to_jsonl(
    dataset: *const AgsDataset,
    out: *mut *mut c_char,
) -> AgsStatus {
    guard(|| {
        let dataset = ref_arg(dataset, "dataset")?;
        write_out(out, into_c_string(dataset.0.to_jsonl_string()), "out")
    })
}

/// Pooled pairwise agreement.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_dataset_agreement(
    dataset: *const AgsDataset,
    out: *mut f64,
) -> AgsStatus {
    guard(|| {
        let dataset = ref_arg(dataset, "dataset")?;
        write_out(out, agreement_probability(&dataset.0)?, "out")
    })
}

/// Learns the conflation matrix of a dataset.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_matrix_learn(
    dataset: *const AgsDataset,
    out: *mut *mut AgsMatrix,
) -> AgsStatus {
    guard(|| {
        let dataset = ref_arg(dataset, "dataset")?;
        let matrix = learn_conflation(&dataset.0)?;
        write_out(out, Box::into_raw(Box::new(AgsMatrix(matrix))), "out")
    })
}

/// The built-in controversy pair counts.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_matrix_reference(out: *mut *mut AgsMatrix) -> AgsStatus {
    guard(|| {
        let matrix = ConflationMatrix::controversy_reference();
        write_out(out, Box::into_raw(Box::new(AgsMatrix(matrix))), "out")
    })
}

/// Parses a matrix from its JSON file format.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_matrix_from_json(
    json: *const c_char,
    out: *mut *mut AgsMatrix,
) -> AgsStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        let matrix = ConflationMatrix::from_json_str(json)?;
        write_out(out, Box::into_raw(Box::new(AgsMatrix(matrix))), "out")
    })
}

/// JSON file format of the matrix. Free with `ags_string_free`.
///
/// # Safety
/// `matrix` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_matrix_to_json(
    matrix: *const AgsMatrix,
    out: *mut *mut c_char,
) -> AgsStatus {
    guard(|| {
        let matrix = ref_arg(matrix, "matrix")?;
        write_out(out, into_c_string(matrix.0.to_json_pretty()), "out")
    })
}

/// Count for the ordered label pair `(a, b)`.
///
/// # Safety
/// `matrix` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_matrix_count(
    matrix: *const AgsMatrix,
    a: i64,
    b: i64,
    out: *mut u64,
) -> AgsStatus {
    guard(|| {
        let matrix = ref_arg(matrix, "matrix")?;
        let count = matrix.0.count(a, b).ok_or_else(|| {
            Failure(
                AgsStatus::InvalidArgument,
                format!("({a}, {b}) is not a label pair"),
            )
        })?;
        write_out(out, count, "out")
    })
}

/// # Safety
/// `matrix` must come from this library and not have been freed. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn ags_matrix_free(matrix: *mut AgsMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Generates a dataset calibrated to `matrix` with a fixed number of
/// annotators per document.
///
/// # Safety
/// `matrix` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_synth_calibrated(
    matrix: *const AgsMatrix,
    n_docs: usize,
    annotators: usize,
    seed: u64,
    out: *mut *mut AgsDataset,
) -> AgsStatus {
    guard(|| {
        let matrix = ref_arg(matrix, "matrix")?;
        let config = SynthConfig {
            n_docs,
            annotators: AnnotatorCount::Fixed(annotators),
            ..SynthConfig::calibrated(matrix.0.clone(), seed)
        };
        let dataset = generate(&config)?;
        write_out(out, Box::into_raw(Box::new(AgsDataset(dataset))), "out")
    })
}

/// Runs one simulation. `matrix` may be NULL when neither model conflates.
/// `metric` may be NULL for AUC. `jobs` of 0 uses the default thread count.
/// Percentiles reported are 5, 50 and 95.
///
/// # Safety
/// Handles must be live or NULL where allowed; strings NUL-terminated;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ags_simulate(
    dataset: *const AgsDataset,
    matrix: *const AgsMatrix,
    system_model: *const c_char,
    truth_model: *const c_char,
    metric: *const c_char,
    n_trials: usize,
    seed: u64,
    jobs: usize,
    out: *mut *mut AgsRun,
) -> AgsStatus {
    guard(|| {
        let dataset = ref_arg(dataset, "dataset")?;
        let matrix = matrix.as_ref().map(|m| &m.0);
        let system = str_arg(system_model, "system_model")?.parse()?;
        let truth = str_arg(truth_model, "truth_model")?.parse()?;
        let mut config = SimulationConfig::new(system, truth, seed).with_trials(n_trials);
        if !metric.is_null() {
            config.metric = str_arg(metric, "metric")?.parse()?;
        }
        config.flip_space = FlipSpace::Binary;
        let jobs = Jobs((jobs > 0).then_some(jobs));
        let run = run_simulation_with_jobs(&config, &dataset.0, matrix, jobs)?;
        write_out(out, Box::into_raw(Box::new(AgsRun(run))), "out")
    })
}

/// Nearest-rank percentile `q` in (0, 100) of the run's samples.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_run_percentile(
    run: *const AgsRun,
    q: f64,
    out: *mut f64,
) -> AgsStatus {
    guard(|| {
        let run = ref_arg(run, "run")?;
        if !(q > 0.0 && q < 100.0) {
            return Err(Failure(
                AgsStatus::InvalidArgument,
                format!("percentile {q} outside (0, 100)"),
            ));
        }
        write_out(out, percentile_sorted(&run.0.samples, q), "out")
    })
}

/// Number of trials with a defined metric.
///
/// # Safety
/// `run` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn ags_run_n_valid(run: *const AgsRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.report.n_valid)
}

/// Number of trials whose metric was undefined.
///
/// # Safety
/// `run` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn ags_run_n_undefined(run: *const AgsRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.report.n_undefined)
}

/// Borrows the sorted samples. The pointer lives as long as `run`.
///
/// # Safety
/// `run` must be a live handle; `data` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_run_samples(
    run: *const AgsRun,
    data: *mut *const f64,
    len: *mut usize,
) -> AgsStatus {
    guard(|| {
        let run = ref_arg(run, "run")?;
        if data.is_null() || len.is_null() {
            return Err(null("data/len"));
        }
        data.write(run.0.samples.as_ptr());
        len.write(run.0.samples.len());
        Ok(())
    })
}

/// JSON report. Free with `ags_string_free`.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_run_report_json(
    run: *const AgsRun,
    out: *mut *mut c_char,
) -> AgsStatus {
    guard(|| {
        let run = ref_arg(run, "run")?;
        write_out(out, into_c_string(run.0.report.to_json_pretty()), "out")
    })
}

/// # Safety
/// `run` must come from this library and not have been freed. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn ags_run_free(run: *mut AgsRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Rank-based AUC. `truth[i]` is nonzero for positives.
///
/// # Safety
/// `truth` and `scores` must point to `n` readable elements.
#[no_mangle]
pub unsafe extern "C" fn ags_auc(
    truth: *const u8,
    scores: *const f64,
    n: usize,
    out: *mut f64,
) -> AgsStatus {
    guard(|| {
        if truth.is_null() || scores.is_null() {
            return Err(null("truth/scores"));
        }
        let truth: Vec<bool> = std::slice::from_raw_parts(truth, n)
            .iter()
            .map(|&t| t != 0)
            .collect();
        let scores = std::slice::from_raw_parts(scores, n);
        let value = auc(MetricInput::new(&truth, scores)?)?;
        write_out(out, value, "out")
    })
}

/// Percentile rank of `score` within `samples` and its verdict against the
/// band `[low, high]`.
///
/// # Safety
/// `samples` must point to `n` readable values; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ags_assess(
    score: f64,
    samples: *const f64,
    n: usize,
    low: f64,
    high: f64,
    percentile_rank: *mut f64,
    verdict: *mut AgsVerdict,
) -> AgsStatus {
    guard(|| {
        if samples.is_null() {
            return Err(null("samples"));
        }
        if percentile_rank.is_null() || verdict.is_null() {
            return Err(null("percentile_rank/verdict"));
        }
        let samples = std::slice::from_raw_parts(samples, n);
        let result = assess_claim(score, samples, (low, high))?;
        percentile_rank.write(result.percentile_rank);
        verdict.write(result.verdict.into());
        Ok(())
    })
}
