//! C interface to `descmap`.
//!
//! Every function returns a [`DmStatus`]; on failure a message is kept per
//! thread and read with [`dm_last_error_message`]. Matrices cross the boundary
//! as row-major `double` arrays. Handles are opaque and released with the
//! matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use descmap::estimator::{self, MapEstimate, Method};
use descmap::kcf::compute_kcf;
use descmap::model::validate_with;
use descmap::sim::{simulate, FreeStateSpec, Trajectory};
use descmap::{Error, StochasticDescriptorModel};
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    SingularTransform = 4,
    IllConditioned = 5,
    ModelRejected = 6,
    NotPsd = 7,
    SingularWeight = 8,
    Unestimable = 9,
    Infeasible = 10,
    LossOfInformation = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmMethod {
    Batch = 0,
    Recursive = 1,
    Ml = 2,
    Constrained = 3,
    Transformed = 4,
    DenseOracle = 5,
}

impl From<DmMethod> for Method {
    fn from(m: DmMethod) -> Self {
        match m {
            DmMethod::Batch => Method::Batch,
            DmMethod::Recursive => Method::Recursive,
            DmMethod::Ml => Method::Ml,
            DmMethod::Constrained => Method::Constrained,
            DmMethod::Transformed => Method::Transformed,
            DmMethod::DenseOracle => Method::DenseOracle,
        }
    }
}

/// Validation findings of a model.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DmValidation {
    pub well_posed: bool,
    pub row_rank_ok: bool,
    pub estimable_global: bool,
    pub estimable_u_blocks: bool,
    pub f_full_col_rank: bool,
    pub causal: bool,
    pub overdetermined_blocks_present: bool,
    pub p0_definite: bool,
    pub index: usize,
}

/// Opaque stochastic descriptor model.
pub struct DmModel(StochasticDescriptorModel);

/// Opaque simulated trajectory.
pub struct DmTrajectory(Trajectory);

/// Opaque MAP estimate.
pub struct DmEstimate(MapEstimate);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(DmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Dimension(_) => DmStatus::Dimension,
            Error::InvalidArgument(_) => DmStatus::InvalidArgument,
            Error::SingularTransform(_) => DmStatus::SingularTransform,
            Error::IllConditioned(_) => DmStatus::IllConditioned,
            Error::ModelRejected(_) => DmStatus::ModelRejected,
            Error::NotPsd(_) => DmStatus::NotPsd,
            Error::SingularWeight(_) => DmStatus::SingularWeight,
            Error::Unestimable(_) => DmStatus::Unestimable,
            Error::Infeasible(_) => DmStatus::Infeasible,
            Error::LossOfInformation { .. } => DmStatus::LossOfInformation,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DmStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DmStatus::Panic
        }
    }
}

/// # Safety
/// `data` must be null (only when `rows * cols == 0`) or point to `rows * cols` doubles.
unsafe fn read_matrix(data: *const f64, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>, Failure> {
    let len = rows.checked_mul(cols).ok_or_else(|| Failure(DmStatus::Dimension, format!("{what} is too large")))?;
    if len == 0 {
        return Ok(DMatrix::zeros(rows, cols));
    }
    if data.is_null() {
        return Err(null(what));
    }
    let s = std::slice::from_raw_parts(data, len);
    Ok(DMatrix::from_row_slice(rows, cols, s))
}

/// # Safety
/// `out` must be null or point to `len` writable doubles.
unsafe fn write_rows(seq: &[DVector<f64>], out: *mut f64, len: usize) -> Result<(), Failure> {
    let need: usize = seq.iter().map(|v| v.len()).sum();
    if need == 0 {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < need {
        return Err(Failure(DmStatus::Dimension, format!("output buffer holds {len} values, {need} needed")));
    }
    let dst = std::slice::from_raw_parts_mut(out, need);
    for (chunk, v) in dst.chunks_mut(seq[0].len().max(1)).zip(seq) {
        chunk.copy_from_slice(v.as_slice());
    }
    Ok(())
}

/// # Safety
/// `data` must be null (only when the size is zero) or point to `(horizon + 1) * width` doubles.
unsafe fn read_rows(data: *const f64, steps: usize, width: usize, what: &str) -> Result<Vec<DVector<f64>>, Failure> {
    let m = read_matrix(data, steps, width, what)?;
    Ok(m.row_iter().map(|r| r.transpose()).collect())
}

/// Message describing the last failure on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn dm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn dm_status_name(status: DmStatus) -> *const c_char {
    let s: &'static CStr = match status {
        DmStatus::Ok => c"ok",
        DmStatus::NullPointer => c"null_pointer",
        DmStatus::InvalidArgument => c"invalid_argument",
        DmStatus::Dimension => c"dimension",
        DmStatus::SingularTransform => c"singular_transform",
        DmStatus::IllConditioned => c"ill_conditioned",
        DmStatus::ModelRejected => c"model_rejected",
        DmStatus::NotPsd => c"not_psd",
        DmStatus::SingularWeight => c"singular_weight",
        DmStatus::Unestimable => c"unestimable",
        DmStatus::Infeasible => c"infeasible",
        DmStatus::LossOfInformation => c"loss_of_information",
        DmStatus::Panic => c"panic",
    };
    s.as_ptr()
}

#[no_mangle]
pub extern "C" fn dm_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => c"",
    };
    VERSION.as_ptr()
}

#[no_mangle]
pub extern "C" fn dm_default_tol() -> f64 {
    descmap::linalg::DEFAULT_TOL
}

/// Build a model `E x_{k+1} = A x_k + B u_k + F w_k`, `y_k = H x_k + v_k`.
///
/// Sizes: `E`, `A` are `n_eq × n`; `B` is `n_eq × j`; `F` is `n_eq × p`; `H` is
/// `m × n`; `R` is `m × m`; `P0` is `n_eq × n_eq`; `r0bar` has `n_eq` entries.
///
/// # Safety
/// Each pointer must reference the stated number of doubles (or be null when
/// that number is zero); `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dm_model_new(
    n_eq: usize,
    n: usize,
    j: usize,
    p: usize,
    m: usize,
    e: *const f64,
    a: *const f64,
    b: *const f64,
    f: *const f64,
    h: *const f64,
    r: *const f64,
    r0bar: *const f64,
    p0: *const f64,
    out: *mut *mut DmModel,
) -> DmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = StochasticDescriptorModel::new(
            read_matrix(e, n_eq, n, "E")?,
            read_matrix(a, n_eq, n, "A")?,
            read_matrix(b, n_eq, j, "B")?,
            read_matrix(f, n_eq, p, "F")?,
            read_matrix(h, m, n, "H")?,
            read_matrix(r, m, m, "R")?,
            read_matrix(r0bar, n_eq, 1, "r0bar")?.column(0).into_owned(),
            read_matrix(p0, n_eq, n_eq, "P0")?,
        )?;
        *out = Box::into_raw(Box::new(DmModel(model)));
        Ok(())
    })
}

/// Parse a model from the JSON model-file format.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dm_model_from_json(json: *const c_char, out: *mut *mut DmModel) -> DmStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Failure(DmStatus::InvalidArgument, "json is not valid UTF-8".into()))?;
        let file = descmap::cli::files::ModelFile::parse(text, "json")
            .map_err(|e| Failure(DmStatus::InvalidArgument, e.message))?;
        let model = file.model().map_err(|e| Failure(DmStatus::InvalidArgument, e.message))?;
        *out = Box::into_raw(Box::new(DmModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dm_model_free(model: *mut DmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn dm_model_dims(
    model: *const DmModel,
    n_eq: *mut usize,
    n: *mut usize,
    j: *mut usize,
    p: *mut usize,
    m: *mut usize,
) -> DmStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.0;
        for (dst, v) in [
            (n_eq, model.n_eq()),
            (n, model.n()),
            (j, model.n_inputs()),
            (p, model.n_disturbances()),
            (m, model.n_outputs()),
        ] {
            if !dst.is_null() {
                *dst = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dm_validate(model: *const DmModel, tol: f64, out: *mut DmValidation) -> DmStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let d = compute_kcf(&model.pencil(), tol)?;
        let v = validate_with(model, &d, tol)?;
        *out = DmValidation {
            well_posed: v.well_posed(),
            row_rank_ok: v.row_rank_ok,
            estimable_global: v.estimable_global,
            estimable_u_blocks: v.estimable_u_blocks,
            f_full_col_rank: v.f_full_col_rank,
            causal: v.causal,
            overdetermined_blocks_present: v.overdetermined_blocks_present,
            p0_definite: v.p0_definite,
            index: v.index,
        };
        Ok(())
    })
}

/// Full validation report as JSON; release with [`dm_string_free`].
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dm_validate_json(model: *const DmModel, tol: f64, out: *mut *mut c_char) -> DmStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let v = descmap::validate(model, tol)?;
        let text = serde_json::to_string(&v).map_err(|e| Failure(DmStatus::InvalidArgument, e.to_string()))?;
        *out = CString::new(text).map_err(|e| Failure(DmStatus::InvalidArgument, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Simulate `horizon` steps. `u` holds `(horizon + 1) × j` row-major inputs, or is
/// null for zero input. Free states are drawn from `N(0, free_q²)`.
///
/// # Safety
/// `model` must be a live handle, `u` null or sized as stated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dm_simulate(
    model: *const DmModel,
    horizon: usize,
    u: *const f64,
    seed: u64,
    free_q: f64,
    out: *mut *mut DmTrajectory,
) -> DmStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let steps = horizon + 1;
        let inputs = if u.is_null() {
            vec![DVector::zeros(model.n_inputs()); steps]
        } else {
            read_rows(u, steps, model.n_inputs(), "u")?
        };
        let d = compute_kcf(&model.pencil(), descmap::linalg::DEFAULT_TOL)?;
        let t = simulate(model, &d, &inputs, seed, &FreeStateSpec::Sampled { mean: None, q: free_q })?;
        *out = Box::into_raw(Box::new(DmTrajectory(t)));
        Ok(())
    })
}

/// # Safety
/// `traj` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_free(traj: *mut DmTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// # Safety
/// `traj` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_horizon(traj: *const DmTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.horizon())
}

/// Copy `x_0..x_T` (row-major, `(T+1) × n`) into `out` of capacity `len`.
///
/// # Safety
/// `traj` must be a live handle and `out` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_states(traj: *const DmTrajectory, out: *mut f64, len: usize) -> DmStatus {
    guard(|| write_rows(&traj.as_ref().ok_or_else(|| null("trajectory"))?.0.states, out, len))
}

/// Copy `y_0..y_T` (row-major, `(T+1) × m`) into `out` of capacity `len`.
///
/// # Safety
/// `traj` must be a live handle and `out` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_measurements(traj: *const DmTrajectory, out: *mut f64, len: usize) -> DmStatus {
    guard(|| write_rows(&traj.as_ref().ok_or_else(|| null("trajectory"))?.0.measurements, out, len))
}

/// MAP estimate from `horizon + 1` measurements `y` (row-major `(T+1) × m`) and
/// inputs `u` (row-major `(T+1) × j`, null when `j = 0`). `q` is used by the
/// transformed method only.
///
/// # Safety
/// `model` must be a live handle, `y`/`u` sized as stated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dm_estimate(
    model: *const DmModel,
    horizon: usize,
    y: *const f64,
    u: *const f64,
    method: DmMethod,
    q: f64,
    tol: f64,
    out: *mut *mut DmEstimate,
) -> DmStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let steps = horizon + 1;
        let ys = read_rows(y, steps, model.n_outputs(), "y")?;
        let us = if model.n_inputs() == 0 { Vec::new() } else { read_rows(u, steps, model.n_inputs(), "u")? };
        let est = estimator::estimate(model, &ys, &us, method.into(), q, tol)?;
        *out = Box::into_raw(Box::new(DmEstimate(est)));
        Ok(())
    })
}

/// # Safety
/// `est` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dm_estimate_free(est: *mut DmEstimate) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// # Safety
/// `est` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_estimate_horizon(est: *const DmEstimate) -> usize {
    est.as_ref().map_or(0, |e| e.0.horizon())
}

/// Objective value at the estimate; NaN for a null handle.
///
/// # Safety
/// `est` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn dm_estimate_objective(est: *const DmEstimate) -> f64 {
    est.as_ref().map_or(f64::NAN, |e| e.0.objective_value)
}

/// Copy `x̂_0..x̂_T` (row-major, `(T+1) × n`) into `out` of capacity `len`.
///
/// # Safety
/// `est` must be a live handle and `out` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dm_estimate_states(est: *const DmEstimate, out: *mut f64, len: usize) -> DmStatus {
    guard(|| write_rows(&est.as_ref().ok_or_else(|| null("estimate"))?.0.states, out, len))
}
