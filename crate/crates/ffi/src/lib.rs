//! C ABI for the `zkms` library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/solver
//! functions and released by the matching `*_free`. Every fallible function
//! returns a [`ZkmsStatus`]; on failure the message is available from
//! [`zkms_last_error_message`] on the same thread. Panics are caught and
//! reported as [`ZkmsStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use zkms::checkpoint::Checkpoint;
use zkms::evolution::{self, Evolver, EvolverConfig};
use zkms::groundstate::{GroundStateCache, SolitonParams};
use zkms::linearized::LinearizedOperator;
use zkms::{Field, Grid, ZkError};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZkmsStatus {
    Ok = 0,
    InvalidArgument = 1,
    ConvergenceFailure = 2,
    BlowUpDetected = 3,
    ModulationFailure = 4,
    InsufficientRange = 5,
    InvalidConfig = 6,
    UnsupportedCase = 7,
    Format = 8,
    Io = 9,
    NullPointer = 10,
    Panic = 11,
}

impl From<&ZkError> for ZkmsStatus {
    fn from(e: &ZkError) -> Self {
        match e {
            ZkError::InvalidArgument(_) => ZkmsStatus::InvalidArgument,
            ZkError::ConvergenceFailure { .. } => ZkmsStatus::ConvergenceFailure,
            ZkError::BlowUpDetected { .. } => ZkmsStatus::BlowUpDetected,
            ZkError::ModulationFailure(_) => ZkmsStatus::ModulationFailure,
            ZkError::InsufficientRange(_) => ZkmsStatus::InsufficientRange,
            ZkError::InvalidConfig(_) => ZkmsStatus::InvalidConfig,
            ZkError::UnsupportedCase(_) => ZkmsStatus::UnsupportedCase,
            ZkError::Format(_) => ZkmsStatus::Format,
            ZkError::Io(_) => ZkmsStatus::Io,
        }
    }
}

/// Opaque sampling grid.
pub struct ZkmsGrid(Arc<Grid>);

/// Opaque real field on a grid.
pub struct ZkmsField(Field);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), ZkmsStatusError>) -> ZkmsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ZkmsStatus::Ok,
        Ok(Err(ZkmsStatusError(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ZkmsStatus::Panic
        }
    }
}

struct ZkmsStatusError(ZkmsStatus, String);

impl From<ZkError> for ZkmsStatusError {
    fn from(e: ZkError) -> Self {
        ZkmsStatusError((&e).into(), e.to_string())
    }
}

fn null(what: &str) -> ZkmsStatusError {
    ZkmsStatusError(ZkmsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, ZkmsStatusError> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, ZkmsStatusError> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, ZkmsStatusError> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_string)
        .map_err(|_| ZkmsStatusError(ZkmsStatus::InvalidArgument, "path is not UTF-8".into()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn zkms_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated and
/// nul-terminated) and returns the full message length, or 0 when no error
/// is pending. `buf` may be null to query the length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn zkms_last_error_message(buf: *mut c_char, len: usize) -> usize {
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

/// Creates a grid with `dim` axes (2 or 3), per-axis point counts and box
/// lengths, and comoving frame speed `frame`.
///
/// # Safety
/// `points` and `lengths` must hold `dim` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zkms_grid_new(
    dim: usize,
    points: *const usize,
    lengths: *const f64,
    frame: f64,
    out_grid: *mut *mut ZkmsGrid,
) -> ZkmsStatus {
    guard(|| {
        let out_grid = out(out_grid, "out_grid")?;
        if points.is_null() || lengths.is_null() {
            return Err(null("points or lengths"));
        }
        if !(dim == 2 || dim == 3) {
            return Err(ZkError::InvalidArgument(format!("grid dimension must be 2 or 3, got {dim}")).into());
        }
        let g = Grid::new(slice::from_raw_parts(lengths, dim), slice::from_raw_parts(points, dim), frame)?;
        *out_grid = Box::into_raw(Box::new(ZkmsGrid(Arc::new(g))));
        Ok(())
    })
}

/// # Safety
/// `grid` must be null or a handle from [`zkms_grid_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn zkms_grid_free(grid: *mut ZkmsGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Number of samples of fields on `grid` (0 for a null handle).
///
/// # Safety
/// `grid` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn zkms_grid_len(grid: *const ZkmsGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.len())
}

fn boxed_field(f: Field) -> *mut ZkmsField {
    Box::into_raw(Box::new(ZkmsField(f)))
}

/// Copies `len` samples (row-major, axis 1 slowest) into a new field.
///
/// # Safety
/// `values` must hold `len` doubles; `grid` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn zkms_field_from_values(
    grid: *const ZkmsGrid,
    values: *const f64,
    len: usize,
    out_field: *mut *mut ZkmsField,
) -> ZkmsStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let out_field = out(out_field, "out_field")?;
        if values.is_null() {
            return Err(null("values"));
        }
        let f = Field::new(g.0.clone(), slice::from_raw_parts(values, len).to_vec())?;
        *out_field = boxed_field(f);
        Ok(())
    })
}

/// Copies the samples of `field` into `buf`, which must have exactly
/// [`zkms_field_len`] entries.
///
/// # Safety
/// `field` must be live and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn zkms_field_values(field: *const ZkmsField, buf: *mut f64, len: usize) -> ZkmsStatus {
    guard(|| {
        let f = deref(field, "field")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let v = f.0.values();
        if len != v.len() {
            return Err(ZkError::InvalidArgument(format!("buffer holds {len} values, field has {}", v.len())).into());
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, len);
        Ok(())
    })
}

/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn zkms_field_len(field: *const ZkmsField) -> usize {
    field.as_ref().map_or(0, |f| f.0.values().len())
}

/// # Safety
/// `field` must be null or a handle returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn zkms_field_free(field: *mut ZkmsField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Ground state `Q_c` of power `p` centred on `grid`; the sup-norm residual
/// of the elliptic equation is stored in `out_residual` when non-null.
///
/// # Safety
/// `grid` must be live and `out_field` writable.
#[no_mangle]
pub unsafe extern "C" fn zkms_ground_state(
    grid: *const ZkmsGrid,
    c: f64,
    p: u32,
    out_field: *mut *mut ZkmsField,
    out_residual: *mut f64,
) -> ZkmsStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let out_field = out(out_field, "out_field")?;
        let gs = GroundStateCache::global().get(c, p, &g.0)?;
        if let Some(r) = out_residual.as_mut() {
            *r = gs.residual_norm;
        }
        *out_field = boxed_field(gs.profile.clone());
        Ok(())
    })
}

/// Sum of solitons `σ_k Q_{c_k}(x - c_k t e_1 - y_k)` at time `t`;
/// `shifts` holds `count × dim` entries, `signs` may be null (all +1).
///
/// # Safety
/// Arrays must hold the stated number of entries; `grid` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn zkms_multi_soliton(
    grid: *const ZkmsGrid,
    p: u32,
    count: usize,
    speeds: *const f64,
    shifts: *const f64,
    signs: *const f64,
    t: f64,
    out_field: *mut *mut ZkmsField,
) -> ZkmsStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let out_field = out(out_field, "out_field")?;
        if speeds.is_null() || shifts.is_null() || count == 0 {
            return Err(null("speeds or shifts"));
        }
        let d = g.0.dim();
        let c = slice::from_raw_parts(speeds, count);
        let y = slice::from_raw_parts(shifts, count * d);
        let s = if signs.is_null() { None } else { Some(slice::from_raw_parts(signs, count)) };
        let params: Vec<SolitonParams> = (0..count)
            .map(|k| SolitonParams::new(c[k], y[k * d..(k + 1) * d].to_vec(), s.map_or(1.0, |s| s[k])))
            .collect();
        *out_field = boxed_field(zkms::groundstate::multi_soliton(&params, p, t, &g.0)?);
        Ok(())
    })
}

/// Mass `½∫u²` of `field`.
///
/// # Safety
/// `field` must be live and `out_mass` writable.
#[no_mangle]
pub unsafe extern "C" fn zkms_mass(field: *const ZkmsField, out_mass: *mut f64) -> ZkmsStatus {
    guard(|| {
        let f = deref(field, "field")?;
        *out(out_mass, "out_mass")? = evolution::mass(&f.0);
        Ok(())
    })
}

/// Energy `∫ ½|∇u|² - u^{p+1}/(p+1)` of `field`.
///
/// # Safety
/// `field` must be live and `out_energy` writable.
#[no_mangle]
pub unsafe extern "C" fn zkms_energy(field: *const ZkmsField, p: u32, out_energy: *mut f64) -> ZkmsStatus {
    guard(|| {
        let f = deref(field, "field")?;
        *out(out_energy, "out_energy")? = evolution::energy(&f.0, p);
        Ok(())
    })
}

/// Integrates `field` from `t0` to `t1` with step magnitude `dt` (ETDRK4,
/// in the grid's comoving frame).
///
/// # Safety
/// `field` must be live and `out_field` writable.
#[no_mangle]
pub unsafe extern "C" fn zkms_evolve(
    field: *const ZkmsField,
    p: u32,
    t0: f64,
    t1: f64,
    dt: f64,
    out_field: *mut *mut ZkmsField,
) -> ZkmsStatus {
    guard(|| {
        let f = deref(field, "field")?;
        let out_field = out(out_field, "out_field")?;
        let grid = f.0.grid().clone();
        let cfg = EvolverConfig::new(dt).with_frame_speed(grid.comoving_speed());
        let mut ev = Evolver::new(grid, p, cfg)?;
        *out_field = boxed_field(ev.evolve(&f.0, t0, t1, usize::MAX, &mut [])?);
        Ok(())
    })
}

/// Negative eigenvalue `-λ₀` of the linearized operator around `Q_c`:
/// stores `λ₀ > 0`.
///
/// # Safety
/// `grid` must be live and `out_lambda0` writable.
#[no_mangle]
pub unsafe extern "C" fn zkms_ground_eigenvalue(
    grid: *const ZkmsGrid,
    c: f64,
    p: u32,
    out_lambda0: *mut f64,
) -> ZkmsStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let out_lambda0 = out(out_lambda0, "out_lambda0")?;
        let gs = GroundStateCache::global().get(c, p, &g.0)?;
        *out_lambda0 = LinearizedOperator::new(&gs).ground_eigenpair(zkms::linearized::EIGEN_TOL)?.lambda0;
        Ok(())
    })
}

/// Writes `field` at time `t` as a binary checkpoint.
///
/// # Safety
/// `field` must be live; `path` a nul-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn zkms_checkpoint_write(
    field: *const ZkmsField,
    p: u32,
    t: f64,
    path: *const c_char,
) -> ZkmsStatus {
    guard(|| {
        let f = deref(field, "field")?;
        let path = path_arg(path)?;
        Checkpoint { p, time: t, field: f.0.clone() }.write_path(path)?;
        Ok(())
    })
}

/// Reads a checkpoint; `out_grid`, `out_p` and `out_time` may be null.
///
/// # Safety
/// `path` must be a nul-terminated UTF-8 string; non-null outputs writable.
#[no_mangle]
pub unsafe extern "C" fn zkms_checkpoint_read(
    path: *const c_char,
    out_field: *mut *mut ZkmsField,
    out_grid: *mut *mut ZkmsGrid,
    out_p: *mut u32,
    out_time: *mut f64,
) -> ZkmsStatus {
    guard(|| {
        let path = path_arg(path)?;
        let out_field = out(out_field, "out_field")?;
        let ck = Checkpoint::read_path(path)?;
        if let Some(g) = out_grid.as_mut() {
            *g = Box::into_raw(Box::new(ZkmsGrid(ck.field.grid().clone())));
        }
        if let Some(p) = out_p.as_mut() {
            *p = ck.p;
        }
        if let Some(t) = out_time.as_mut() {
            *t = ck.time;
        }
        *out_field = boxed_field(ck.field);
        Ok(())
    })
}

/// Runs the command-line interface with `argc` arguments (including the
/// program name) and returns its exit status.
///
/// # Safety
/// `argv` must hold `argc` nul-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn zkms_run_cli(argc: usize, argv: *const *const c_char) -> i32 {
    if argv.is_null() {
        return zkms::cli::EXIT_USAGE;
    }
    let args: Vec<String> = slice::from_raw_parts(argv, argc)
        .iter()
        .map(|&a| if a.is_null() { String::new() } else { CStr::from_ptr(a).to_string_lossy().into_owned() })
        .collect();
    catch_unwind(|| zkms::cli::run(args)).unwrap_or(zkms::cli::EXIT_NUMERICAL)
}
