//! C ABI over the core crate.
//!
//! Handles are opaque and owned by the caller once returned; release them with
//! the matching `*_free`. Every fallible call returns a `BhStatus` and leaves a
//! message for `bh_last_error`. Complex matrices cross the boundary as
//! row-major interleaved `[re, im]` doubles.

use bloch_homog::bloch::FiberContext;
use bloch_homog::cli::config;
use bloch_homog::effective::{self, EffectiveData};
use bloch_homog::error::Error;
use bloch_homog::gallery;
use bloch_homog::germ::GermContext;
use bloch_homog::model::OperatorModel;
use bloch_homog::propagate::{fiber_error_norm, ErrorForm};
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Validation = 3,
    Numerical = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Operator model with the cutoff used for its cell problem.
pub struct BhModel {
    model: OperatorModel,
    cutoff: usize,
}

/// Effective characteristics bound to the model they came from.
pub struct BhEffective {
    model: OperatorModel,
    data: EffectiveData,
    germ: GermContext,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> BhStatus {
    match e {
        Error::Numerical(_) => BhStatus::Numerical,
        Error::Io(_) => BhStatus::Io,
        Error::Config(_) => BhStatus::InvalidArgument,
        Error::Parameter(_) => BhStatus::InvalidArgument,
        _ => BhStatus::Validation,
    }
}

fn guard(f: impl FnOnce() -> Result<(), BhStatus>) -> BhStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BhStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            BhStatus::Panic
        }
    }
}

fn fail(e: Error) -> BhStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> BhStatus {
    set_error(format!("{what} is null"));
    BhStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, BhStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not UTF-8"));
        BhStatus::InvalidArgument
    })
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], BhStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn validated(model: OperatorModel, cutoff: usize) -> Result<Box<BhModel>, BhStatus> {
    let report = model.validate();
    if !report.passed {
        let msgs: Vec<String> = report.failures().iter().map(|c| format!("{}: {}", c.name, c.detail)).collect();
        set_error(msgs.join("; "));
        return Err(BhStatus::Validation);
    }
    Ok(Box::new(BhModel { model, cutoff }))
}

/// Version string of the library; static, do not free.
#[no_mangle]
pub extern "C" fn bh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated).
/// Returns the message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn bh_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a gallery model by name, using the entry's default parameters.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bh_model_from_gallery(name: *const c_char, out: *mut *mut BhModel) -> BhStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let entry = gallery::by_name(name, &[]).map_err(fail)?;
        *out = Box::into_raw(validated(entry.model, entry.cutoff)?);
        Ok(())
    })
}

/// Builds the model section of a TOML run config.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bh_model_from_config(path: *const c_char, out: *mut *mut BhModel) -> BhStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = config::load(Path::new(path), &[]).map_err(fail)?;
        let built = config::build_model(&cfg.model).map_err(fail)?;
        let cutoff = cfg
            .numerics
            .cutoff
            .or(built.entry.as_ref().map(|e| e.cutoff))
            .unwrap_or(16);
        *out = Box::into_raw(validated(built.model, cutoff)?);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from a `bh_model_*` constructor, freed once.
#[no_mangle]
pub unsafe extern "C" fn bh_model_free(model: *mut BhModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the space dimension d, the symbol rows m and columns n.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bh_model_dims(model: *const BhModel, d: *mut usize, m: *mut usize, n: *mut usize) -> BhStatus {
    guard(|| {
        let mdl = model.as_ref().ok_or_else(|| null("model"))?;
        if d.is_null() || m.is_null() || n.is_null() {
            return Err(null("output"));
        }
        *d = mdl.model.d();
        *m = mdl.model.m();
        *n = mdl.model.n();
        Ok(())
    })
}

/// Solves the cell problem; `cutoff` 0 keeps the model's default.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bh_effective_compute(
    model: *const BhModel,
    cutoff: usize,
    out: *mut *mut BhEffective,
) -> BhStatus {
    guard(|| {
        let mdl = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let k = if cutoff == 0 { mdl.cutoff } else { cutoff };
        let data = effective::compute(&mdl.model, k).map_err(fail)?;
        let germ = GermContext::new(&mdl.model, &data).map_err(fail)?;
        *out = Box::into_raw(Box::new(BhEffective {
            model: mdl.model.clone(),
            data,
            germ,
        }));
        Ok(())
    })
}

/// # Safety
/// `eff` must be null or a handle from `bh_effective_compute`, freed once.
#[no_mangle]
pub unsafe extern "C" fn bh_effective_free(eff: *mut BhEffective) {
    if !eff.is_null() {
        drop(Box::from_raw(eff));
    }
}

/// Copies the m x m effective matrix g0 into `buf` (2 m^2 doubles).
///
/// # Safety
/// `eff` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bh_effective_g0(eff: *const BhEffective, buf: *mut f64, len: usize) -> BhStatus {
    guard(|| {
        let e = eff.as_ref().ok_or_else(|| null("effective"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let g0 = &e.data.g0;
        let need = 2 * g0.nrows() * g0.ncols();
        if len < need {
            set_error(format!("buffer holds {len} doubles, {need} needed"));
            return Err(BhStatus::BufferTooSmall);
        }
        let out = std::slice::from_raw_parts_mut(buf, need);
        for i in 0..g0.nrows() {
            for j in 0..g0.ncols() {
                let z = g0[(i, j)];
                let at = 2 * (i * g0.ncols() + j);
                out[at] = z.re;
                out[at + 1] = z.im;
            }
        }
        Ok(())
    })
}

/// Germ eigenvalues gamma_l(theta) and corrector coefficients mu_l(theta),
/// n values each, for a unit direction of length d.
///
/// # Safety
/// `theta` must hold `d` doubles; `gamma` and `mu` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn bh_germ_at(
    eff: *const BhEffective,
    theta: *const f64,
    d: usize,
    gamma: *mut f64,
    mu: *mut f64,
    n: usize,
) -> BhStatus {
    guard(|| {
        let e = eff.as_ref().ok_or_else(|| null("effective"))?;
        let th = slice_arg(theta, d, "theta")?;
        if gamma.is_null() || mu.is_null() {
            return Err(null("output"));
        }
        if d != e.model.d() {
            set_error(format!("theta has length {d}, model dimension is {}", e.model.d()));
            return Err(BhStatus::InvalidArgument);
        }
        if n < e.model.n() {
            set_error(format!("outputs hold {n} values, {} needed", e.model.n()));
            return Err(BhStatus::BufferTooSmall);
        }
        let (g, c) = e.germ.correctors(th).map_err(fail)?;
        for (l, (gv, mv)) in g.gamma.iter().zip(&c.mu).enumerate() {
            *gamma.add(l) = *gv;
            *mu.add(l) = *mv;
        }
        Ok(())
    })
}

/// Smoothed propagator error at one quasimomentum k (length d):
/// the norm of (exact - effective) evolution over time tau composed with
/// eps^s (|D|^2 + eps^2)^(-s/2). `sandwiched` selects the f-weighted form.
///
/// # Safety
/// `k` must hold `d` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bh_fiber_error(
    eff: *const BhEffective,
    fiber_cutoff: usize,
    k: *const f64,
    d: usize,
    eps: f64,
    tau: f64,
    s: f64,
    sandwiched: bool,
    out: *mut f64,
) -> BhStatus {
    guard(|| {
        let e = eff.as_ref().ok_or_else(|| null("effective"))?;
        let kv = slice_arg(k, d, "k")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if d != e.model.d() {
            set_error(format!("k has length {d}, model dimension is {}", e.model.d()));
            return Err(BhStatus::InvalidArgument);
        }
        let ctx = FiberContext::new(&e.model, fiber_cutoff, Some(&e.data.g0)).map_err(fail)?;
        let form = if sandwiched { ErrorForm::Sandwiched } else { ErrorForm::Plain };
        *out = fiber_error_norm(&ctx, kv, eps, tau, s, form).map_err(fail)?;
        Ok(())
    })
}
