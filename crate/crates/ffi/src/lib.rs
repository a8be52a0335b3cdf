//! C ABI for the metalogic harness.
//!
//! Every fallible function returns an [`MlStatus`] and writes its result
//! through an out pointer. On failure `ml_last_error` returns a message for
//! the calling thread. Strings returned through out pointers are owned by
//! the caller and must be released with `ml_string_free`; formulas with
//! `ml_formula_free`. JSON in and out uses the same shapes as the CLI and
//! the run artifacts.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use metalogic::backends::DetectionResult;
use metalogic::classifier::{annotate, ClassifierConfig};
use metalogic::comparator::{compare_pair, ComparatorConfig};
use metalogic::logic::{apply_law, equivalent, parse_formula, Formula, Law, LawVariant, LogicError};
use metalogic::suite::{generate_suite, SuiteConfig, TestCase};
use metalogic::templates::{find_template, template_registry};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    /// The law's pattern does not match the formula root.
    NotApplicable = 4,
    /// Too many distinct atoms for a truth-table check.
    BudgetExceeded = 5,
    InvalidArgument = 6,
    NotFound = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlVariant {
    And = 0,
    Or = 1,
}

/// Opaque parsed formula.
pub struct MlFormula {
    inner: Formula,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MlStatus, String);

impl From<LogicError> for Failure {
    fn from(e: LogicError) -> Self {
        let status = match e {
            LogicError::Syntax { .. } | LogicError::CountOutOfRange { .. } | LogicError::InvalidEntity(_) => {
                MlStatus::ParseError
            }
            LogicError::PatternMismatch { .. } => MlStatus::NotApplicable,
            LogicError::AtomBudgetExceeded { .. } => MlStatus::BudgetExceeded,
            _ => MlStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MlStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MlStatus::Internal
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(MlStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MlStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn read_opt_str<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        read_str(p, what).map(Some)
    }
}

unsafe fn formula_ref<'a>(p: *const MlFormula, what: &str) -> Result<&'a Formula, Failure> {
    p.as_ref()
        .map(|f| &f.inner)
        .ok_or_else(|| Failure(MlStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(MlStatus::NullPointer, "output pointer is null".into()))
}

fn to_c(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(MlStatus::Internal, "string contains a nul byte".into()))
}

fn json_arg<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure(MlStatus::InvalidArgument, format!("{what}: {e}")))
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<*mut c_char, Failure> {
    to_c(serde_json::to_string(v).map_err(|e| Failure(MlStatus::Internal, e.to_string()))?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ml_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ml_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ml_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses the formula DSL, e.g. `cat@left & !(dog | cow#3)`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ml_formula_parse(text: *const c_char, out: *mut *mut MlFormula) -> MlStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let f = parse_formula(read_str(text, "text")?)?;
        *out = Box::into_raw(Box::new(MlFormula { inner: f }));
        Ok(())
    })
}

/// # Safety
/// `f` must be NULL or a formula from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ml_formula_free(f: *mut MlFormula) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Canonical DSL text of a formula.
///
/// # Safety
/// `f` must be a live formula; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ml_formula_to_string(f: *const MlFormula, out: *mut *mut c_char) -> MlStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = to_c(formula_ref(f, "formula")?.to_string())?;
        Ok(())
    })
}

/// Truth-table equivalence.
///
/// # Safety
/// `a` and `b` must be live formulas; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ml_formula_equivalent(a: *const MlFormula, b: *const MlFormula, out: *mut bool) -> MlStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = equivalent(formula_ref(a, "a")?, formula_ref(b, "b")?)?;
        Ok(())
    })
}

/// Applies one law at the root: `law` is one of commutative, associative,
/// distributive, complement, demorgan.
///
/// # Safety
/// `f` must be a live formula, `law` a NUL-terminated string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ml_formula_apply_law(
    f: *const MlFormula,
    law: *const c_char,
    variant: MlVariant,
    out: *mut *mut MlFormula,
) -> MlStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let name = read_str(law, "law")?;
        let law = Law::from_name(name).ok_or_else(|| Failure(MlStatus::InvalidArgument, format!("unknown law {name:?}")))?;
        let variant = match variant {
            MlVariant::And => LawVariant::And,
            MlVariant::Or => LawVariant::Or,
        };
        let g = apply_law(formula_ref(f, "formula")?, law, variant)?;
        *out = Box::into_raw(Box::new(MlFormula { inner: g }));
        Ok(())
    })
}

/// The template registry as a JSON array.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ml_templates_json(out: *mut *mut c_char) -> MlStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = to_json(&template_registry())?;
        Ok(())
    })
}

/// Instantiates a template into a test case (prompts, scene, seeds) as
/// JSON. `entities_json` is an array of labels; `count` is 0 for
/// non-numbering templates.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ml_case_json(
    template_id: *const c_char,
    entities_json: *const c_char,
    count: u8,
    seed: u64,
    out: *mut *mut c_char,
) -> MlStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let id = read_str(template_id, "template_id")?;
        let tp = find_template(id).ok_or_else(|| Failure(MlStatus::NotFound, format!("no template {id:?}")))?;
        let entities: Vec<String> = json_arg(read_str(entities_json, "entities_json")?, "entities_json")?;
        let refs: Vec<&str> = entities.iter().map(String::as_str).collect();
        let count = (count > 0).then_some(count);
        let case = TestCase::new(&tp, &refs, count, seed).map_err(|e| Failure(MlStatus::InvalidArgument, e.to_string()))?;
        *out = to_json(&case)?;
        Ok(())
    })
}

/// Generates a suite and returns its JSONL manifest. `config_json` may be
/// NULL for the default suite.
///
/// # Safety
/// `config_json` must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ml_suite_jsonl(config_json: *const c_char, out: *mut *mut c_char) -> MlStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let config: SuiteConfig = match read_opt_str(config_json, "config_json")? {
            Some(t) => json_arg(t, "config_json")?,
            None => SuiteConfig::default(),
        };
        let suite = generate_suite(&config).map_err(|e| Failure(MlStatus::InvalidArgument, e.to_string()))?;
        let mut buf = Vec::new();
        suite
            .write_jsonl(&mut buf)
            .map_err(|e| Failure(MlStatus::Internal, e.to_string()))?;
        *out = to_c(String::from_utf8(buf).map_err(|e| Failure(MlStatus::Internal, e.to_string()))?)?;
        Ok(())
    })
}

/// Compares two detection results for a case and returns the classified
/// verdict as JSON. `comparator_json` and `classifier_json` may be NULL for
/// defaults.
///
/// # Safety
/// String arguments must be NULL (where allowed) or NUL-terminated; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn ml_compare_pair_json(
    case_json: *const c_char,
    det_a_json: *const c_char,
    det_b_json: *const c_char,
    comparator_json: *const c_char,
    classifier_json: *const c_char,
    out: *mut *mut c_char,
) -> MlStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let case: TestCase = json_arg(read_str(case_json, "case_json")?, "case_json")?;
        let a: DetectionResult = json_arg(read_str(det_a_json, "det_a_json")?, "det_a_json")?;
        let b: DetectionResult = json_arg(read_str(det_b_json, "det_b_json")?, "det_b_json")?;
        let cmp: ComparatorConfig = match read_opt_str(comparator_json, "comparator_json")? {
            Some(t) => json_arg(t, "comparator_json")?,
            None => ComparatorConfig::default(),
        };
        let cls: ClassifierConfig = match read_opt_str(classifier_json, "classifier_json")? {
            Some(t) => json_arg(t, "classifier_json")?,
            None => ClassifierConfig::default(),
        };
        let mut v = compare_pair(&case, &a, &b, &cmp).map_err(|e| Failure(MlStatus::InvalidArgument, e.to_string()))?;
        annotate(&mut v, &a, &b, &case, &cls);
        *out = to_json(&v)?;
        Ok(())
    })
}
