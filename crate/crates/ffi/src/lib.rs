//! C ABI for percolab.
//!
//! Conventions:
//! - Every fallible function returns a [`PercolabStatus`] and writes its
//!   result through an out-pointer only on success.
//! - Models are opaque handles created by [`percolab_model_new`] and released
//!   with [`percolab_model_free`].
//! - On failure a message is stored per thread; read it with
//!   [`percolab_last_error_message`]. The pointer stays valid until the next
//!   failing call on the same thread.
//! - Panics never cross the boundary; they are reported as
//!   `PERCOLAB_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use percolab::estimators::{beta0, phi, sharp_length, susceptibility, McOptions, Method, SharpValue};
use percolab::oracle::{verify_instance, Instance};
use percolab::{Error, Estimate, Region, SpreadOutModel};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PercolabStatus {
    Ok = 0,
    /// An inequality check failed (the call itself succeeded).
    VerificationFailed = 1,
    /// Invalid argument, including malformed instance text.
    Usage = 2,
    /// A size or resource limit was exceeded.
    Capacity = 3,
    /// Too many explorations hit the site cap.
    Censored = 4,
    /// The requested quantity is not defined for these parameters.
    Undefined = 5,
    Internal = 6,
    Io = 7,
    NullPointer = 8,
    Panic = 9,
}

/// A Monte Carlo or exact value with its standard error.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PercolabEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub censored_rate: f64,
}

impl From<&Estimate> for PercolabEstimate {
    fn from(e: &Estimate) -> Self {
        PercolabEstimate {
            value: e.value,
            std_error: e.std_error,
            n_samples: e.n_samples as u64,
            censored_rate: e.censored_rate,
        }
    }
}

/// Opaque handle to a spread-out percolation model `(d, L, β)`.
pub struct PercolabModel {
    inner: SpreadOutModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PercolabStatus {
    match e {
        Error::Usage(_) | Error::Parse { .. } => PercolabStatus::Usage,
        Error::Capacity(_) => PercolabStatus::Capacity,
        Error::Censored { .. } => PercolabStatus::Censored,
        Error::Undefined(_) => PercolabStatus::Undefined,
        Error::Io(_) => PercolabStatus::Io,
        Error::Internal(_) | Error::Csv(_) | Error::Json(_) => PercolabStatus::Internal,
    }
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<PercolabStatus, (PercolabStatus, String)>) -> PercolabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PercolabStatus::Panic
        }
    }
}

fn lib<T>(r: percolab::Result<T>) -> Result<T, (PercolabStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (PercolabStatus, String) {
    (PercolabStatus::NullPointer, format!("{what} is a null pointer"))
}

/// # Safety
/// `p` must be null or valid for writes of `T`.
unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), (PercolabStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

/// # Safety
/// `m` must be null or a live handle from [`percolab_model_new`].
unsafe fn model_ref<'a>(m: *const PercolabModel) -> Result<&'a SpreadOutModel, (PercolabStatus, String)> {
    m.as_ref().map(|h| &h.inner).ok_or_else(|| null("model"))
}

fn mc(n: u64, seed: u64, cap: u64) -> McOptions {
    let opts = McOptions::new(n as usize, seed);
    if cap == 0 {
        opts
    } else {
        opts.with_cap(cap as usize)
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn percolab_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => c"unknown",
    };
    VERSION.as_ptr()
}

/// Message of the last failure on this thread, or null if none.
#[no_mangle]
pub extern "C" fn percolab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Forgets the stored error message of this thread.
#[no_mangle]
pub extern "C" fn percolab_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Creates a model handle. Release it with [`percolab_model_free`].
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn percolab_model_new(
    d: u32,
    range: i64,
    beta: f64,
    out: *mut *mut PercolabModel,
) -> PercolabStatus {
    guard(|| {
        let inner = lib(SpreadOutModel::new(d as usize, range, beta))?;
        let h = Box::into_raw(Box::new(PercolabModel { inner }));
        if out.is_null() {
            drop(Box::from_raw(h));
            return Err(null("out"));
        }
        out.write(h);
        Ok(PercolabStatus::Ok)
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must be null or a handle from [`percolab_model_new`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn percolab_model_free(model: *mut PercolabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Edge probability `p_β = 1 - exp(-β c_L)`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn percolab_model_p_beta(model: *const PercolabModel, out: *mut f64) -> PercolabStatus {
    guard(|| {
        let m = model_ref(model)?;
        write_out(out, m.p_beta(), "out")?;
        Ok(PercolabStatus::Ok)
    })
}

/// `β_0(d, L)`, the point where `|Λ_L^*| p_β = 1`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn percolab_beta0(d: u32, range: i64, out: *mut f64) -> PercolabStatus {
    guard(|| {
        let v = lib(beta0(d as usize, range))?;
        write_out(out, v, "out")?;
        Ok(PercolabStatus::Ok)
    })
}

/// Mean cluster size `χ(β)` from `n` explorations; `cap = 0` keeps the
/// default site cap.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn percolab_susceptibility(
    model: *const PercolabModel,
    n: u64,
    seed: u64,
    cap: u64,
    out: *mut PercolabEstimate,
) -> PercolabStatus {
    guard(|| {
        let m = model_ref(model)?;
        let e = lib(susceptibility(m, mc(n, seed, cap)))?;
        write_out(out, PercolabEstimate::from(&e), "out")?;
        Ok(PercolabStatus::Ok)
    })
}

/// `φ_β(Λ_k)`, the expected number of open exit pairs of the box of radius `k`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn percolab_phi_box(
    model: *const PercolabModel,
    k: i64,
    n: u64,
    seed: u64,
    cap: u64,
    out: *mut PercolabEstimate,
) -> PercolabStatus {
    guard(|| {
        let m = model_ref(model)?;
        if k < 0 {
            return Err((PercolabStatus::Usage, "k must be nonnegative".into()));
        }
        let e = lib(phi(m, &Region::cube(m.dim(), k), Method::MonteCarlo(mc(n, seed, cap))))?;
        write_out(out, PercolabEstimate::from(&e), "out")?;
        Ok(PercolabStatus::Ok)
    })
}

/// Sharp length `L_β(ε)` searched up to `k_cap`. `bounded` is set to false
/// when no crossing was found (then `out_k == k_cap`).
///
/// # Safety
/// `model` must be a live handle; `out_k` and `bounded` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn percolab_sharp_length(
    model: *const PercolabModel,
    epsilon: f64,
    k_cap: u32,
    n: u64,
    seed: u64,
    out_k: *mut u32,
    bounded: *mut bool,
) -> PercolabStatus {
    guard(|| {
        let m = model_ref(model)?;
        let s = lib(sharp_length(m, epsilon, k_cap, Method::MonteCarlo(mc(n, seed, 0))))?;
        let (k, b) = match s.value {
            SharpValue::Finite(k) => (k, true),
            SharpValue::Unbounded(k) => (k, false),
        };
        write_out(out_k, k, "out_k")?;
        write_out(bounded, b, "bounded")?;
        Ok(PercolabStatus::Ok)
    })
}

/// Runs every exact check declared by an instance in the plain-text replay
/// format. Returns `PERCOLAB_STATUS_VERIFICATION_FAILED` if any check fails;
/// the counts are written in both cases.
///
/// # Safety
/// `text` must be a NUL-terminated string; the out-pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn percolab_verify_instance(
    text: *const c_char,
    checks: *mut u64,
    failures: *mut u64,
) -> PercolabStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        let s = CStr::from_ptr(text)
            .to_str()
            .map_err(|_| (PercolabStatus::Usage, "instance text is not UTF-8".to_string()))?;
        let inst = lib(Instance::parse(s))?;
        let reps = lib(verify_instance(&inst))?;
        let failed = reps.iter().filter(|r| !r.passed).count();
        write_out(checks, reps.len() as u64, "checks")?;
        write_out(failures, failed as u64, "failures")?;
        if failed > 0 {
            set_error(format!("{failed} of {} checks failed", reps.len()));
            return Ok(PercolabStatus::VerificationFailed);
        }
        Ok(PercolabStatus::Ok)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    fn last_error() -> String {
        let p = percolab_last_error_message();
        assert!(!p.is_null());
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }

    #[test]
    fn model_lifecycle() {
        let mut m = ptr::null_mut();
        assert_eq!(unsafe { percolab_model_new(2, 1, 0.5, &mut m) }, PercolabStatus::Ok);
        let mut p = 0.0;
        assert_eq!(unsafe { percolab_model_p_beta(m, &mut p) }, PercolabStatus::Ok);
        assert!((p - (-(-0.5f64 / 8.0).exp_m1())).abs() < 1e-15);
        unsafe { percolab_model_free(m) };
        unsafe { percolab_model_free(ptr::null_mut()) };
    }

    #[test]
    fn invalid_arguments_set_the_message() {
        percolab_clear_error();
        let mut m = ptr::null_mut();
        assert_eq!(unsafe { percolab_model_new(0, 1, 0.5, &mut m) }, PercolabStatus::Usage);
        assert!(m.is_null());
        assert!(last_error().contains("usage"));
        let mut p = 0.0;
        assert_eq!(unsafe { percolab_model_p_beta(ptr::null(), &mut p) }, PercolabStatus::NullPointer);
        assert!(last_error().contains("null"));
        percolab_clear_error();
        assert!(percolab_last_error_message().is_null());
    }

    #[test]
    fn beta_zero_susceptibility_is_one() {
        let mut m = ptr::null_mut();
        unsafe { percolab_model_new(3, 1, 0.0, &mut m) };
        let mut e = PercolabEstimate { value: 0.0, std_error: 1.0, n_samples: 0, censored_rate: 1.0 };
        assert_eq!(unsafe { percolab_susceptibility(m, 10, 1, 0, &mut e) }, PercolabStatus::Ok);
        assert_eq!((e.value, e.std_error), (1.0, 0.0));
        let (mut k, mut b) = (0u32, false);
        assert_eq!(unsafe { percolab_sharp_length(m, 0.5, 8, 10, 1, &mut k, &mut b) }, PercolabStatus::Ok);
        assert_eq!((k, b), (1, true));
        unsafe { percolab_model_free(m) };
    }

    #[test]
    fn beta0_matches_the_library() {
        let mut b = 0.0;
        assert_eq!(unsafe { percolab_beta0(2, 1, &mut b) }, PercolabStatus::Ok);
        assert!((b + 8.0 * (7.0f64 / 8.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn instance_verification() {
        let text = c"d 1\nsite 0\nsite 1\nsite 2\nedge 0 1 0.3\nedge 1 2 0.3\nedge 0 2 0.3\nregion S 0\npoint o 0\npoint x 2\nevent 0 2\n";
        let (mut c, mut f) = (0u64, 9u64);
        assert_eq!(unsafe { percolab_verify_instance(text.as_ptr(), &mut c, &mut f) }, PercolabStatus::Ok);
        assert_eq!((c, f), (3, 0));
        let bad = c"d 1\nsite 0\nedge 0 1 0.3\n";
        assert_eq!(unsafe { percolab_verify_instance(bad.as_ptr(), &mut c, &mut f) }, PercolabStatus::Usage);
        assert!(last_error().contains("line 3"));
    }

    #[test]
    fn version_is_a_string() {
        let v = unsafe { CStr::from_ptr(percolab_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}
