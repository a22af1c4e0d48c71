//! C ABI for the decoder workbench: opaque handles, integer error codes, and
//! a thread-local last-error message. All entry points catch panics.

// Every entry point takes raw pointers from C; null checks happen inside so
// the signatures stay plain for the generated header.
#![allow(clippy::not_unsafe_ptr_arg_deref)]

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use nfec::decoders::{bp_sum_product, map_bitwise_enum, map_bitwise_trellis};
use nfec::gf2::{build_code, CodeSpec, LinearCode};
use nfec::nn::DecoderModel;
use nfec::sim::{simulate, MapFrameDecoder, StopRule};
use nfec::train::load_checkpoint;

/// Success.
pub const NFEC_OK: c_int = 0;
/// Null pointer, bad length, or malformed input.
pub const NFEC_ERR_INVALID_ARG: c_int = 1;
/// The operation is not supported for this code (guard limits).
pub const NFEC_ERR_UNSUPPORTED: c_int = 2;
/// Any other runtime failure; see `nfec_last_error_message`.
pub const NFEC_ERR_RUNTIME: c_int = 3;
/// An internal panic was caught.
pub const NFEC_ERR_PANIC: c_int = 4;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn classify(err: &nfec::Error) -> c_int {
    use nfec::Error::*;
    match err {
        DimMismatch(_) | Config(_) | AlistParse(_) | Checkpoint(_) => NFEC_ERR_INVALID_ARG,
        UnsupportedCode(_) | GuardViolation(_) => NFEC_ERR_UNSUPPORTED,
        _ => NFEC_ERR_RUNTIME,
    }
}

fn guarded<F: FnOnce() -> c_int>(f: F) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic");
            NFEC_ERR_PANIC
        }
    }
}

/// Message for the most recent error on this thread. Valid until the next
/// failing call from the same thread.
#[no_mangle]
pub extern "C" fn nfec_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Opaque linear block code handle.
pub struct NfecCode {
    code: Arc<LinearCode>,
}

/// Opaque trained-decoder handle.
pub struct NfecModel {
    model: DecoderModel,
}

/// Build a code from a JSON spec such as `{"kind":"bch","m":4,"t":2}`.
/// Returns null on failure.
#[no_mangle]
pub extern "C" fn nfec_code_new_json(spec_json: *const c_char) -> *mut NfecCode {
    let mut out: *mut NfecCode = std::ptr::null_mut();
    guarded(|| {
        if spec_json.is_null() {
            set_error("spec_json is null");
            return NFEC_ERR_INVALID_ARG;
        }
        let text = unsafe { CStr::from_ptr(spec_json) }.to_string_lossy();
        let spec: CodeSpec = match serde_json::from_str(&text) {
            Ok(s) => s,
            Err(e) => {
                set_error(&format!("bad code spec: {e}"));
                return NFEC_ERR_INVALID_ARG;
            }
        };
        match build_code(&spec) {
            Ok(code) => {
                out = Box::into_raw(Box::new(NfecCode {
                    code: Arc::new(code),
                }));
                NFEC_OK
            }
            Err(e) => {
                set_error(&e.to_string());
                classify(&e)
            }
        }
    });
    out
}

#[no_mangle]
pub extern "C" fn nfec_code_free(code: *mut NfecCode) {
    if !code.is_null() {
        drop(unsafe { Box::from_raw(code) });
    }
}

/// Code length n; 0 for a null handle.
#[no_mangle]
pub extern "C" fn nfec_code_n(code: *const NfecCode) -> c_int {
    if code.is_null() {
        return 0;
    }
    unsafe { &*code }.code.n as c_int
}

/// Information length k; 0 for a null handle.
#[no_mangle]
pub extern "C" fn nfec_code_k(code: *const NfecCode) -> c_int {
    if code.is_null() {
        return 0;
    }
    unsafe { &*code }.code.k as c_int
}

unsafe fn llr_io<'a>(
    code: &LinearCode,
    gamma: *const c_double,
    n: usize,
    out: *mut c_double,
) -> Result<(&'a [f64], &'a mut [f64]), c_int> {
    if gamma.is_null() || out.is_null() {
        set_error("null buffer");
        return Err(NFEC_ERR_INVALID_ARG);
    }
    if n != code.n {
        set_error(&format!("buffer length {n} but code length {}", code.n));
        return Err(NFEC_ERR_INVALID_ARG);
    }
    Ok((
        std::slice::from_raw_parts(gamma, n),
        std::slice::from_raw_parts_mut(out, n),
    ))
}

fn run_decode(
    code: *const NfecCode,
    gamma: *const c_double,
    n: usize,
    out: *mut c_double,
    f: impl Fn(&LinearCode, &[f64]) -> nfec::Result<Vec<f64>>,
) -> c_int {
    guarded(|| {
        if code.is_null() {
            set_error("null code handle");
            return NFEC_ERR_INVALID_ARG;
        }
        let code = &unsafe { &*code }.code;
        let (input, output) = match unsafe { llr_io(code, gamma, n, out) } {
            Ok(x) => x,
            Err(rc) => return rc,
        };
        match f(code, input) {
            Ok(llr) => {
                output.copy_from_slice(&llr);
                NFEC_OK
            }
            Err(e) => {
                set_error(&e.to_string());
                classify(&e)
            }
        }
    })
}

/// Exact bitwise MAP (codebook enumeration). `gamma` and `out` hold n LLRs.
#[no_mangle]
pub extern "C" fn nfec_map_decode_enum(
    code: *const NfecCode,
    gamma: *const c_double,
    n: usize,
    out: *mut c_double,
) -> c_int {
    run_decode(code, gamma, n, out, map_bitwise_enum)
}

/// Exact bitwise MAP (syndrome trellis).
#[no_mangle]
pub extern "C" fn nfec_map_decode_trellis(
    code: *const NfecCode,
    gamma: *const c_double,
    n: usize,
    out: *mut c_double,
) -> c_int {
    run_decode(code, gamma, n, out, map_bitwise_trellis)
}

/// Sum-product belief propagation with `iters` flooding iterations.
#[no_mangle]
pub extern "C" fn nfec_bp_decode(
    code: *const NfecCode,
    gamma: *const c_double,
    n: usize,
    iters: c_int,
    out: *mut c_double,
) -> c_int {
    if iters < 0 {
        set_error("iters must be >= 0");
        return NFEC_ERR_INVALID_ARG;
    }
    run_decode(code, gamma, n, out, |c, g| {
        bp_sum_product(c, g, iters as usize)
    })
}

/// Load a trained decoder checkpoint from a file path. Returns null on
/// failure.
#[no_mangle]
pub extern "C" fn nfec_model_load(path: *const c_char) -> *mut NfecModel {
    let mut out: *mut NfecModel = std::ptr::null_mut();
    guarded(|| {
        if path.is_null() {
            set_error("path is null");
            return NFEC_ERR_INVALID_ARG;
        }
        let path = unsafe { CStr::from_ptr(path) }
            .to_string_lossy()
            .into_owned();
        match load_checkpoint(std::path::Path::new(&path), None) {
            Ok(model) => {
                out = Box::into_raw(Box::new(NfecModel { model }));
                NFEC_OK
            }
            Err(e) => {
                set_error(&e.to_string());
                classify(&e)
            }
        }
    });
    out
}

#[no_mangle]
pub extern "C" fn nfec_model_free(model: *mut NfecModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Code length of the model's component code; 0 for a null handle.
#[no_mangle]
pub extern "C" fn nfec_model_n(model: *const NfecModel) -> c_int {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.model.code.n as c_int
}

/// Soft-output neural decode of one LLR vector.
#[no_mangle]
pub extern "C" fn nfec_model_decode(
    model: *const NfecModel,
    gamma: *const c_double,
    n: usize,
    out: *mut c_double,
) -> c_int {
    guarded(|| {
        if model.is_null() {
            set_error("null model handle");
            return NFEC_ERR_INVALID_ARG;
        }
        let model = &unsafe { &*model }.model;
        let (input, output) = match unsafe { llr_io(&model.code, gamma, n, out) } {
            Ok(x) => x,
            Err(rc) => return rc,
        };
        output.copy_from_slice(&model.decode_llr(input));
        NFEC_OK
    })
}

/// Monte-Carlo BER/FER with the exact MAP decoder at one SNR point.
#[no_mangle]
pub extern "C" fn nfec_simulate_map_ber(
    code: *const NfecCode,
    esn0_db: c_double,
    max_frames: u64,
    target_frame_errors: u64,
    seed: u64,
    ber_out: *mut c_double,
    fer_out: *mut c_double,
) -> c_int {
    guarded(|| {
        if code.is_null() || ber_out.is_null() || fer_out.is_null() {
            set_error("null argument");
            return NFEC_ERR_INVALID_ARG;
        }
        let code = &unsafe { &*code }.code;
        let decoder = MapFrameDecoder(code.clone());
        let stop = StopRule {
            max_frames,
            target_frame_errors,
        };
        match simulate(code, &decoder, &[esn0_db], &stop, seed) {
            Ok(points) => {
                unsafe {
                    *ber_out = points[0].ber;
                    *fer_out = points[0].fer;
                }
                NFEC_OK
            }
            Err(e) => {
                set_error(&e.to_string());
                classify(&e)
            }
        }
    })
}
