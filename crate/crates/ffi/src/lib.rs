//! C interface to the `ellipsys` solvers.
//!
//! Objects are opaque heap handles created by `el_*_new` style functions and
//! released by the matching `el_*_free`. Every fallible call returns an
//! [`ElStatus`]; the message of the last failure on the calling thread is
//! available through [`el_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ellipsys::ellipticity::{fit_k_condition, BoundNonlinearity, EllipticityCertificate, FitConfig, NonlinearitySpec, Weight};
use ellipsys::fields::{random_band_limited, GridSpec, VectorField};
use ellipsys::linear::{LinearSolver, Regularization};
use ellipsys::nonlinear::{campanato_solve, SolveConfig, SolveStatus};
use ellipsys::tensor::{SearchConfig, SymTensor4};
use ellipsys::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    AsymmetricTensor = 4,
    DegenerateSymbol = 5,
    InfeasibleCertificate = 6,
    Diverged = 7,
    NotConverged = 8,
    NonFinite = 9,
    BufferTooSmall = 10,
    Internal = 11,
    Panic = 12,
}

pub struct ElTensor(SymTensor4);
pub struct ElGrid(GridSpec);
pub struct ElField(VectorField);
pub struct ElOperator(BoundNonlinearity);
pub struct ElCertificate(EllipticityCertificate);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ElStatus {
    match e {
        Error::DimensionMismatch(_) => ElStatus::DimensionMismatch,
        Error::AsymmetricTensor(_) | Error::AsymmetricHessian(_) => ElStatus::AsymmetricTensor,
        Error::DegenerateSymbol { .. } => ElStatus::DegenerateSymbol,
        Error::InfeasibleCertificate(_) => ElStatus::InfeasibleCertificate,
        Error::Diverged { .. } => ElStatus::Diverged,
        Error::NonFinite { .. } => ElStatus::NonFinite,
        Error::InvalidInput(_) | Error::Parse(_) | Error::MemoryBudget { .. } => ElStatus::InvalidInput,
        _ => ElStatus::Internal,
    }
}

struct Fail(ElStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ElStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> ElStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ElStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
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
            ElStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn release<T>(h: *mut T) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `h` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn el_tensor_free(h: *mut ElTensor) {
    release(h)
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `h` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn el_grid_free(h: *mut ElGrid) {
    release(h)
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `h` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn el_field_free(h: *mut ElField) {
    release(h)
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `h` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn el_operator_free(h: *mut ElOperator) {
    release(h)
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `h` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn el_certificate_free(h: *mut ElCertificate) {
    release(h)
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn el_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static version string.
#[no_mangle]
pub extern "C" fn el_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Tensor from `N*N*n*n` row-major entries indexed `(alpha, beta, i, j)`.
///
/// # Safety
/// `entries` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_tensor_new(
    dim: usize,
    components: usize,
    entries: *const f64,
    len: usize,
    out: *mut *mut ElTensor,
) -> ElStatus {
    guard(|| {
        let e = slice(entries, len, "entries")?;
        put(out, ElTensor(SymTensor4::new(dim, components, e.to_vec())?))
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_tensor_identity(dim: usize, components: usize, out: *mut *mut ElTensor) -> ElStatus {
    guard(|| {
        if dim == 0 || components == 0 {
            return Err(Fail(ElStatus::InvalidInput, "need n >= 1 and N >= 1".into()));
        }
        put(out, ElTensor(SymTensor4::identity(dim, components)))
    })
}

/// The two-component example tensor with parameter `m >= 8` in `dim` dimensions.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_tensor_example2(m: f64, dim: usize, out: *mut *mut ElTensor) -> ElStatus {
    guard(|| {
        if dim == 0 || !(m >= 8.0 && m.is_finite()) {
            return Err(Fail(ElStatus::InvalidInput, format!("need n >= 1 and m >= 8, got n = {dim}, m = {m}")));
        }
        put(out, ElTensor(SymTensor4::example2_in_dim(m, dim)))
    })
}

/// Ellipticity constant `nu(A)`.
///
/// # Safety
/// Handles must be valid; `nu` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_tensor_ellipticity_constant(t: *const ElTensor, nu: *mut f64) -> ElStatus {
    guard(|| {
        let t = get(t, "tensor")?;
        if nu.is_null() {
            return Err(null("nu"));
        }
        *nu = t.0.ellipticity_constant(&SearchConfig::default()).nu;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_grid_new(
    dim: usize,
    components: usize,
    points: usize,
    period: f64,
    out: *mut *mut ElGrid,
) -> ElStatus {
    guard(|| put(out, ElGrid(GridSpec::new(dim, components, points, period)?)))
}

/// Number of values in a field on this grid, `N * M^n`.
///
/// # Safety
/// `g` must be a valid handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn el_grid_field_len(g: *const ElGrid) -> usize {
    g.as_ref().map_or(0, |g| g.0.components() * g.0.total_points())
}

/// Field from component-major physical values.
///
/// # Safety
/// `values` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn el_field_from_values(
    g: *const ElGrid,
    values: *const f64,
    len: usize,
    out: *mut *mut ElField,
) -> ElStatus {
    guard(|| {
        let g = get(g, "grid")?;
        let v = slice(values, len, "values")?;
        put(out, ElField(VectorField::from_physical(&g.0, v.to_vec())?))
    })
}

/// Zero-mean random field with frequencies `|k_i| <= band`.
///
/// # Safety
/// Handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn el_field_random(g: *const ElGrid, band: usize, seed: u64, out: *mut *mut ElField) -> ElStatus {
    guard(|| {
        let g = get(g, "grid")?;
        put(out, ElField(random_band_limited(&g.0, band, seed)?.to_physical()))
    })
}

/// Copies physical values into `buf`, which must hold exactly the field length.
///
/// # Safety
/// `buf` must be writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn el_field_values(f: *const ElField, buf: *mut f64, len: usize) -> ElStatus {
    guard(|| {
        let f = get(f, "field")?;
        let phys = f.0.to_physical();
        let v = phys.physical()?;
        if buf.is_null() {
            return Err(null("buffer"));
        }
        if len < v.len() {
            return Err(Fail(
                ElStatus::BufferTooSmall,
                format!("buffer holds {len} values, field has {}", v.len()),
            ));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// `L2` norm over the torus.
///
/// # Safety
/// `f` must be valid or null (returns NaN).
#[no_mangle]
pub unsafe extern "C" fn el_field_l2_norm(f: *const ElField) -> f64 {
    f.as_ref().map_or(f64::NAN, |f| f.0.l2_norm())
}

/// Solves `A:D^2u = f`; `eps > 0` selects the regularised multiplier.
///
/// # Safety
/// Handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn el_solve_linear(
    t: *const ElTensor,
    f: *const ElField,
    eps: f64,
    out: *mut *mut ElField,
) -> ElStatus {
    guard(|| {
        let (t, f) = (get(t, "tensor")?, get(f, "rhs")?);
        let reg = if eps > 0.0 {
            Regularization::Epsilon { eps }
        } else {
            Regularization::Exact
        };
        let res = LinearSolver::new(&t.0, f.0.grid(), reg)?.solve(&f.0)?;
        put(out, ElField(res.u))
    })
}

/// `F(x, X) = g^2(x) (A:X + G(X))` with `g^2 = mean + amplitude cos(2 pi x_1 / L)`
/// and a sine perturbation of Lipschitz constant `rho nu(A)` (`rho = 0` gives the
/// linear operator).
///
/// # Safety
/// Handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn el_operator_new(
    t: *const ElTensor,
    g: *const ElGrid,
    rho: f64,
    weight_mean: f64,
    weight_amplitude: f64,
    out: *mut *mut ElOperator,
) -> ElStatus {
    guard(|| {
        let (t, g) = (get(t, "tensor")?, get(g, "grid")?);
        let weight = if weight_amplitude == 0.0 && weight_mean == 1.0 {
            Weight::Unit
        } else {
            Weight::Cosine {
                mean: weight_mean,
                amplitude: weight_amplitude,
            }
        };
        let spec = if rho == 0.0 {
            NonlinearitySpec::linear(t.0.clone()).with_weight(weight)
        } else {
            NonlinearitySpec::sine_perturbed(t.0.clone(), rho, weight)?
        };
        put(out, ElOperator(spec.bind(&g.0)?))
    })
}

/// `F(., D^2u)` pointwise.
///
/// # Safety
/// Handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn el_operator_apply(op: *const ElOperator, u: *const ElField, out: *mut *mut ElField) -> ElStatus {
    guard(|| {
        let (op, u) = (get(op, "operator")?, get(u, "field")?);
        let h = ellipsys::fields::spectral_hessian(&u.0);
        put(out, ElField(op.0.apply(&h)?))
    })
}

/// Fits a structure-condition certificate for `op` around the anchor `t`.
///
/// # Safety
/// Handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn el_certificate_fit(
    op: *const ElOperator,
    t: *const ElTensor,
    seed: u64,
    out: *mut *mut ElCertificate,
) -> ElStatus {
    guard(|| {
        let (op, t) = (get(op, "operator")?, get(t, "tensor")?);
        let mut cfg = FitConfig::default();
        cfg.sampler.seed = seed;
        let fit = fit_k_condition(&op.0, &t.0, &cfg)?;
        let cert = fit.certificate.ok_or(Error::InfeasibleCertificate(fit.best_sum))?;
        put(out, ElCertificate(cert))
    })
}

/// Reads `(nu, beta, gamma)`; any output pointer may be null.
///
/// # Safety
/// `c` must be valid.
#[no_mangle]
pub unsafe extern "C" fn el_certificate_constants(
    c: *const ElCertificate,
    nu: *mut f64,
    beta: *mut f64,
    gamma: *mut f64,
) -> ElStatus {
    guard(|| {
        let c = get(c, "certificate")?;
        for (p, v) in [(nu, c.0.nu), (beta, c.0.beta), (gamma, c.0.gamma)] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Solves `F(., D^2u) = f` by the near-operator iteration. On
/// `ElStatus::NotConverged` the last iterate is still returned in `out`.
///
/// # Safety
/// Handles must be valid; `iterations` may be null.
#[no_mangle]
pub unsafe extern "C" fn el_solve(
    t: *const ElTensor,
    op: *const ElOperator,
    c: *const ElCertificate,
    f: *const ElField,
    tol: f64,
    max_iters: usize,
    out: *mut *mut ElField,
    iterations: *mut usize,
) -> ElStatus {
    guard(|| {
        let (t, op, c, f) = (get(t, "tensor")?, get(op, "operator")?, get(c, "certificate")?, get(f, "rhs")?);
        let cfg = SolveConfig {
            tol_residual: tol,
            max_iters,
            ..SolveConfig::default()
        };
        let (u, trace) = campanato_solve(&t.0, &op.0, &c.0, &f.0, &cfg)?;
        if !iterations.is_null() {
            *iterations = trace.iterations();
        }
        put(out, ElField(u))?;
        if trace.status != SolveStatus::Converged {
            return Err(Fail(
                ElStatus::NotConverged,
                format!("finished with status {:?} after {} iterations", trace.status, trace.iterations()),
            ));
        }
        Ok(())
    })
}
