//! C ABI over the `fedinv` library.
//!
//! Objects are opaque handles created by `*_new` / producing calls and
//! released with the matching `*_free`. Every call returns a
//! [`FedinvStatus`]; on failure [`fedinv_last_error`] describes the error
//! for the calling thread. Matrices cross the boundary as row-major doubles,
//! configurations as JSON strings in the same schema as the CLI.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fedinv::brs::{generator_matrix, verify_mds, BrsGenerator, CodeParams};
use fedinv::cmm::{three_round_pseudoinverse, two_round_pseudoinverse, CmmConfig};
use fedinv::error::codes;
use fedinv::field::{choose_field, PointSet};
use fedinv::inverse::estimate_inverse;
use fedinv::io::parse_config;
use fedinv::linalg::Mat;
use fedinv::lsq::SolverConfig;
use fedinv::protocol::{build_encoding_pair, EncodingPair};
use fedinv::sim::{run_protocol, NetworkConfig, SimResult};
use fedinv::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FedinvStatus {
    Ok = 0,
    Other = 1,
    Config = 2,
    ThresholdNotMet = 3,
    Numerical = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Dense real matrix.
pub struct FedinvMatrix(Mat);

/// Result of one protocol simulation.
pub struct FedinvSimulation(SimResult);

/// Balanced Reed-Solomon generator with its task allocation.
pub struct FedinvCode(EncodingPair, BrsGenerator);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FedinvStatus {
    match e.code() {
        codes::CONFIG => FedinvStatus::Config,
        codes::THRESHOLD => FedinvStatus::ThresholdNotMet,
        codes::NUMERICAL => FedinvStatus::Numerical,
        _ => FedinvStatus::Other,
    }
}

enum Fail {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FedinvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FedinvStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            FedinvStatus::NullPointer
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            FedinvStatus::Panic
        }
    }
}

unsafe fn r#ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Fail::Lib(Error::Config(format!("{what} is not UTF-8: {e}"))))
}

unsafe fn put<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fedinv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies `rows·cols` row-major values into a new matrix.
#[no_mangle]
pub unsafe extern "C" fn fedinv_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut FedinvMatrix,
) -> FedinvStatus {
    guard(|| {
        if data.is_null() && rows * cols > 0 {
            return Err(Fail::Null("data"));
        }
        let vals = if rows * cols == 0 { &[][..] } else { std::slice::from_raw_parts(data, rows * cols) };
        put(out, FedinvMatrix(Mat::from_row_slice(rows, cols, vals)))
    })
}

#[no_mangle]
pub unsafe extern "C" fn fedinv_matrix_free(m: *mut FedinvMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

#[no_mangle]
pub unsafe extern "C" fn fedinv_matrix_shape(m: *const FedinvMatrix, rows: *mut usize, cols: *mut usize) -> FedinvStatus {
    guard(|| {
        let m = r#ref(m, "matrix")?;
        if rows.is_null() || cols.is_null() {
            return Err(Fail::Null("rows/cols"));
        }
        *rows = m.0.nrows();
        *cols = m.0.ncols();
        Ok(())
    })
}

/// Writes the entries row-major into `out`, which must hold `len ≥ rows·cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn fedinv_matrix_read(m: *const FedinvMatrix, out: *mut f64, len: usize) -> FedinvStatus {
    guard(|| {
        let m = &r#ref(m, "matrix")?.0;
        let need = m.len();
        if len < need {
            return Err(Error::Shape(format!("buffer holds {len} values, matrix has {need}")).into());
        }
        if need == 0 {
            return Ok(());
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let buf = std::slice::from_raw_parts_mut(out, need);
        let cols = m.ncols();
        for r in 0..m.nrows() {
            for c in 0..cols {
                buf[r * cols + c] = m[(r, c)];
            }
        }
        Ok(())
    })
}

/// Column-wise inverse estimate; `solver_json` is a solver config such as
/// `{"method":"cg","epsilon":1e-10}`.
#[no_mangle]
pub unsafe extern "C" fn fedinv_estimate_inverse(
    a: *const FedinvMatrix,
    solver_json: *const c_char,
    out: *mut *mut FedinvMatrix,
) -> FedinvStatus {
    guard(|| {
        let a = &r#ref(a, "a")?.0;
        let cfg: SolverConfig = parse_config(text(solver_json, "solver_json")?)?;
        let est = estimate_inverse(a, &cfg, None)?;
        put(out, FedinvMatrix(est.matrix))
    })
}

/// Runs the four-phase protocol with a network config in the CLI's schema.
/// A run with too few responders still succeeds; check
/// [`fedinv_simulation_estimate`].
#[no_mangle]
pub unsafe extern "C" fn fedinv_simulate(
    a: *const FedinvMatrix,
    config_json: *const c_char,
    out: *mut *mut FedinvSimulation,
) -> FedinvStatus {
    guard(|| {
        let a = &r#ref(a, "a")?.0;
        let cfg: NetworkConfig = parse_config(text(config_json, "config_json")?)?;
        put(out, FedinvSimulation(run_protocol(a, &cfg)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn fedinv_simulation_free(s: *mut FedinvSimulation) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// The decoded inverse, or `FEDINV_STATUS_THRESHOLD_NOT_MET`.
#[no_mangle]
pub unsafe extern "C" fn fedinv_simulation_estimate(
    s: *const FedinvSimulation,
    out: *mut *mut FedinvMatrix,
) -> FedinvStatus {
    guard(|| {
        let s = &r#ref(s, "simulation")?.0;
        let est = s.require_estimate()?.clone();
        put(out, FedinvMatrix(est))
    })
}

/// Summary (threshold, errors, communication load) as a JSON string to be
/// released with [`fedinv_string_free`].
#[no_mangle]
pub unsafe extern "C" fn fedinv_simulation_summary(s: *const FedinvSimulation, out: *mut *mut c_char) -> FedinvStatus {
    guard(|| {
        let s = &r#ref(s, "simulation")?.0;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let v = serde_json::json!({
            "threshold_met": s.threshold_met,
            "recovery_threshold": s.recovery_threshold,
            "stragglers": s.transcript.straggler_set,
            "responders": s.transcript.responders,
            "error_report": s.error_report,
            "load": s.load,
        });
        let c = CString::new(v.to_string()).map_err(|e| Error::Format(e.to_string()))?;
        *out = c.into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fedinv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds an (n, k) BRS generator; `d = 0` selects `n − k + 1`.
#[no_mangle]
pub unsafe extern "C" fn fedinv_code_new(n: usize, k: usize, d: usize, seed: u64, out: *mut *mut FedinvCode) -> FedinvStatus {
    guard(|| {
        let params = if d == 0 { CodeParams::brs(n, k)? } else { CodeParams::new(n, k, d)? };
        let points = PointSet::build(choose_field(n, 1, seed)?, n)?;
        let brs = generator_matrix(&params, &points)?;
        let pair = build_encoding_pair(brs.clone().into(), 0, seed)?;
        put(out, FedinvCode(pair, brs))
    })
}

#[no_mangle]
pub unsafe extern "C" fn fedinv_code_free(c: *mut FedinvCode) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Number of nonzeros of the generator.
#[no_mangle]
pub unsafe extern "C" fn fedinv_code_nnz(c: *const FedinvCode, out: *mut usize) -> FedinvStatus {
    guard(|| {
        let c = r#ref(c, "code")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = fedinv::brs::nnz(&c.1.g);
        Ok(())
    })
}

/// Counts invertible k-row restrictions (all of them, or a seeded sample of
/// `max_subsets`).
#[no_mangle]
pub unsafe extern "C" fn fedinv_code_verify(
    c: *const FedinvCode,
    max_subsets: usize,
    seed: u64,
    invertible: *mut usize,
    checked: *mut usize,
) -> FedinvStatus {
    guard(|| {
        let c = r#ref(c, "code")?;
        if invertible.is_null() || checked.is_null() {
            return Err(Fail::Null("invertible/checked"));
        }
        let r = verify_mds(&c.1.g, max_subsets, seed);
        *invertible = r.invertible;
        *checked = r.checked;
        Ok(())
    })
}

/// Encodes the k column blocks of `x` (N × kT) for every worker and decodes
/// them back from the workers listed in `responders`.
#[no_mangle]
pub unsafe extern "C" fn fedinv_code_roundtrip(
    c: *const FedinvCode,
    x: *const FedinvMatrix,
    responders: *const usize,
    count: usize,
    out: *mut *mut FedinvMatrix,
) -> FedinvStatus {
    guard(|| {
        let c = r#ref(c, "code")?;
        let x = &r#ref(x, "x")?.0;
        if responders.is_null() && count > 0 {
            return Err(Fail::Null("responders"));
        }
        let who = if count == 0 { &[][..] } else { std::slice::from_raw_parts(responders, count) };
        let blocks = fedinv::protocol::column_blocks(x, c.1.k());
        let encs = who.iter().map(|&w| c.0.encode(&blocks, w)).collect::<Result<Vec<_>, _>>()?;
        put(out, FedinvMatrix(c.0.decode(&encs)?))
    })
}

/// Coded left pseudoinverse with 2 or 3 rounds; config in the CLI schema.
#[no_mangle]
pub unsafe extern "C" fn fedinv_pseudoinverse(
    a: *const FedinvMatrix,
    config_json: *const c_char,
    rounds: u32,
    out: *mut *mut FedinvMatrix,
) -> FedinvStatus {
    guard(|| {
        let a = &r#ref(a, "a")?.0;
        let cfg: CmmConfig = parse_config(text(config_json, "config_json")?)?;
        let res = match rounds {
            2 => two_round_pseudoinverse(a, &cfg)?,
            3 => three_round_pseudoinverse(a, &cfg)?,
            r => return Err(Error::Config(format!("rounds must be 2 or 3, got {r}")).into()),
        };
        put(out, FedinvMatrix(res.estimate))
    })
}
