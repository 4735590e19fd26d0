//! C ABI over `lfbl`. Every fallible call returns an [`LfblStatus`]; the
//! message of the last failure on the calling thread is available through
//! [`lfbl_last_error`]. Matrices are dense row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lfbl::harness::{self, ExperimentConfig};
use lfbl::learn::CorrectionPolicy;
use lfbl::linearize::{nominal_control, Correction, DriftForm, VirtualInput};
use lfbl::numerics::{lqr_gain, solve_care, Mat};
use lfbl::planner::PlanResult;
use lfbl::vehicle::{step_rk4, ControlInput, VehicleParams, VehicleState};
use lfbl::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LfblStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Singular = 4,
    NoStabilizingSolution = 5,
    Infeasible = 6,
    MaxIterations = 7,
    NonFinite = 8,
    SpeedTooLow = 9,
    Diverged = 10,
    Io = 11,
    ModelFile = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LfblDrift {
    Exact = 0,
    AsPrinted = 1,
}

/// Opaque experiment configuration.
pub struct LfblConfig {
    inner: ExperimentConfig,
}

/// Opaque reference plan.
pub struct LfblPlan {
    inner: PlanResult,
}

/// Opaque correction policy.
pub struct LfblPolicy {
    inner: CorrectionPolicy,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_last_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> LfblStatus {
    match e {
        Error::Dimension(_) => LfblStatus::Dimension,
        Error::SingularMatrix { .. } => LfblStatus::Singular,
        Error::NoStabilizingSolution { .. } => LfblStatus::NoStabilizingSolution,
        Error::Infeasible(_) => LfblStatus::Infeasible,
        Error::MaxIterations { .. } => LfblStatus::MaxIterations,
        Error::NonFinite(_) | Error::NonFiniteState | Error::NonFiniteLoss { .. } => LfblStatus::NonFinite,
        Error::SpeedTooLow { .. } => LfblStatus::SpeedTooLow,
        Error::EpisodeDiverged { .. } => LfblStatus::Diverged,
        Error::Io(_) | Error::Csv(_) => LfblStatus::Io,
        Error::ModelFile { .. } | Error::Json(_) => LfblStatus::ModelFile,
        _ => LfblStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LfblStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(String::new());
            LfblStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            LfblStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic".into());
            LfblStatus::Panic
        }
    }
}

unsafe fn read<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T: Copy>(p: *mut T, values: &[T], what: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), p, values.len());
    Ok(())
}

unsafe fn c_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::InvalidConfig(format!("{what} is not UTF-8"))))
}

unsafe fn mat(p: *const f64, rows: usize, cols: usize, what: &'static str) -> Result<Mat, Failure> {
    Ok(Mat::from_row_major(rows, cols, read(p, rows * cols, what)?.to_vec())?)
}

fn vehicle(l_r: f64, l_f: f64) -> Result<VehicleParams, Failure> {
    Ok(VehicleParams::new(l_r, l_f)?)
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn lfbl_status_name(status: LfblStatus) -> *const c_char {
    let s: &'static CStr = match status {
        LfblStatus::Ok => c"ok",
        LfblStatus::NullPointer => c"null pointer",
        LfblStatus::InvalidArgument => c"invalid argument",
        LfblStatus::Dimension => c"dimension mismatch",
        LfblStatus::Singular => c"singular matrix",
        LfblStatus::NoStabilizingSolution => c"no stabilizing solution",
        LfblStatus::Infeasible => c"infeasible",
        LfblStatus::MaxIterations => c"iteration limit reached",
        LfblStatus::NonFinite => c"non-finite value",
        LfblStatus::SpeedTooLow => c"speed below decoupling floor",
        LfblStatus::Diverged => c"episode diverged",
        LfblStatus::Io => c"i/o error",
        LfblStatus::ModelFile => c"bad model file",
        LfblStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Copies the calling thread's last error message into `buf` (always
/// NUL-terminated when `cap > 0`) and returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lfbl_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn lfbl_config_default(out: *mut *mut LfblConfig) -> LfblStatus {
    guard(|| {
        let h = Box::new(LfblConfig { inner: ExperimentConfig::default() });
        write_out(out, &[Box::into_raw(h)], "out")
    })
}

/// Parses a TOML experiment config.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn lfbl_config_from_toml(toml: *const c_char, out: *mut *mut LfblConfig) -> LfblStatus {
    guard(|| {
        let text = c_str(toml, "toml")?;
        let h = Box::new(LfblConfig { inner: ExperimentConfig::from_toml(text)? });
        write_out(out, &[Box::into_raw(h)], "out")
    })
}

/// # Safety
/// `cfg` must be a live handle from `lfbl_config_*`.
#[no_mangle]
pub unsafe extern "C" fn lfbl_config_set_seed(cfg: *mut LfblConfig, seed: u64) -> LfblStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or(Failure::Null("cfg"))?;
        cfg.inner.set_seed(seed);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lfbl_config_free(cfg: *mut LfblConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Plans the configured scenario.
///
/// # Safety
/// `cfg` must be a live config handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn lfbl_plan_create(cfg: *const LfblConfig, out: *mut *mut LfblPlan) -> LfblStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or(Failure::Null("cfg"))?;
        let plan = harness::build_plan(&cfg.inner)?;
        write_out(out, &[Box::into_raw(Box::new(LfblPlan { inner: plan }))], "out")
    })
}

/// Number of planned states, or 0 for a null handle.
///
/// # Safety
/// `plan` must be null or a live plan handle.
#[no_mangle]
pub unsafe extern "C" fn lfbl_plan_len(plan: *const LfblPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.inner.len())
}

/// Writes planned state `k` as `(x, ẋ, y, ẏ)` into `out[4]`.
///
/// # Safety
/// `plan` must be a live plan handle and `out` point to 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn lfbl_plan_state(plan: *const LfblPlan, k: usize, out: *mut f64) -> LfblStatus {
    guard(|| {
        let plan = plan.as_ref().ok_or(Failure::Null("plan"))?;
        let s = plan.inner.states.get(k).ok_or_else(|| {
            Failure::Lib(Error::Dimension(format!("state {k} out of {}", plan.inner.len())))
        })?;
        write_out(out, &s.0, "out")
    })
}

/// Writes planned input `k` into `out[2]`; valid for `k < len − 1`.
///
/// # Safety
/// `plan` must be a live plan handle and `out` point to 2 doubles.
#[no_mangle]
pub unsafe extern "C" fn lfbl_plan_input(plan: *const LfblPlan, k: usize, out: *mut f64) -> LfblStatus {
    guard(|| {
        let plan = plan.as_ref().ok_or(Failure::Null("plan"))?;
        let v = plan.inner.inputs.get(k).ok_or_else(|| {
            Failure::Lib(Error::Dimension(format!("input {k} out of {}", plan.inner.inputs.len())))
        })?;
        write_out(out, &v.0, "out")
    })
}

/// # Safety
/// `plan` must be a live plan handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lfbl_plan_objective(plan: *const LfblPlan, out: *mut f64) -> LfblStatus {
    guard(|| {
        let plan = plan.as_ref().ok_or(Failure::Null("plan"))?;
        write_out(out, &[plan.inner.objective], "out")
    })
}

/// # Safety
/// `plan` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lfbl_plan_free(plan: *mut LfblPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Stabilizing solution of `AᵀP + PA − PBR⁻¹BᵀP + Q = 0`; `a` is n×n,
/// `b` n×m, `q` n×n, `r` m×m and `p_out` receives n×n.
///
/// # Safety
/// Every pointer must reference arrays of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn lfbl_solve_care(
    a: *const f64,
    b: *const f64,
    q: *const f64,
    r: *const f64,
    n: usize,
    m: usize,
    p_out: *mut f64,
) -> LfblStatus {
    guard(|| {
        let p = solve_care(&mat(a, n, n, "a")?, &mat(b, n, m, "b")?, &mat(q, n, n, "q")?, &mat(r, m, m, "r")?)?;
        write_out(p_out, p.as_slice(), "p_out")
    })
}

/// LQR gain `F = R⁻¹BᵀP` (m×n) for the same inputs as [`lfbl_solve_care`].
///
/// # Safety
/// Every pointer must reference arrays of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn lfbl_lqr_gain(
    a: *const f64,
    b: *const f64,
    q: *const f64,
    r: *const f64,
    n: usize,
    m: usize,
    f_out: *mut f64,
) -> LfblStatus {
    guard(|| {
        let f = lqr_gain(&mat(a, n, n, "a")?, &mat(b, n, m, "b")?, &mat(q, n, n, "q")?, &mat(r, m, m, "r")?)?;
        write_out(f_out, f.as_slice(), "f_out")
    })
}

/// One RK4 step of the bicycle. `state` is `(x, y, ψ, V, β)`, `control`
/// is `(a, b)`.
///
/// # Safety
/// `state` and `out` must point to 5 doubles, `control` to 2.
#[no_mangle]
pub unsafe extern "C" fn lfbl_vehicle_step(
    state: *const f64,
    control: *const f64,
    l_r: f64,
    l_f: f64,
    dt: f64,
    out: *mut f64,
) -> LfblStatus {
    guard(|| {
        let s = read(state, 5, "state")?;
        let u = read(control, 2, "control")?;
        let s = VehicleState::new(s[0], s[1], s[2], s[3], s[4]);
        let next = step_rk4(&s, &ControlInput::new(u[0], u[1]), &vehicle(l_r, l_f)?, dt)?;
        write_out(out, &next.to_array(), "out")
    })
}

/// Nominal linearizing control `u = A⁻¹(v − b)` into `out[2]`.
///
/// # Safety
/// `state` must point to 5 doubles, `v` and `out` to 2.
#[no_mangle]
pub unsafe extern "C" fn lfbl_nominal_control(
    state: *const f64,
    v: *const f64,
    l_r: f64,
    l_f: f64,
    drift: LfblDrift,
    eps_v: f64,
    out: *mut f64,
) -> LfblStatus {
    guard(|| {
        let s = read(state, 5, "state")?;
        let v = read(v, 2, "v")?;
        let s = VehicleState::new(s[0], s[1], s[2], s[3], s[4]);
        let form = match drift {
            LfblDrift::Exact => DriftForm::Exact,
            LfblDrift::AsPrinted => DriftForm::AsPrinted,
        };
        let u = nominal_control(&s, &VirtualInput::new(v[0], v[1]), &vehicle(l_r, l_f)?, form, eps_v)?;
        write_out(out, &[u.a, u.b], "out")
    })
}

/// Loads a policy written by the CLI's `train` command.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn lfbl_policy_load(path: *const c_char, out: *mut *mut LfblPolicy) -> LfblStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let policy = CorrectionPolicy::load(Path::new(path))?;
        write_out(out, &[Box::into_raw(Box::new(LfblPolicy { inner: policy }))], "out")
    })
}

/// Writes `(Δβ₁, Δβ₂, Δα₁₁, Δα₁₂, Δα₂₁, Δα₂₂)` at `state` into `out[6]`.
///
/// # Safety
/// `policy` must be a live handle, `state` point to 5 doubles and `out` to 6.
#[no_mangle]
pub unsafe extern "C" fn lfbl_policy_corrections(
    policy: *const LfblPolicy,
    state: *const f64,
    out: *mut f64,
) -> LfblStatus {
    guard(|| {
        let policy = policy.as_ref().ok_or(Failure::Null("policy"))?;
        let s = read(state, 5, "state")?;
        let c = policy.inner.corrections(&VehicleState::new(s[0], s[1], s[2], s[3], s[4]));
        let flat = [c.beta[0], c.beta[1], c.alpha[0][0], c.alpha[0][1], c.alpha[1][0], c.alpha[1][1]];
        write_out(out, &flat, "out")
    })
}

/// # Safety
/// `policy` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lfbl_policy_free(policy: *mut LfblPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Noise-free episode return of `policy` on the configured scenario; a
/// null policy runs the nominal controller (the baseline).
///
/// # Safety
/// `cfg` must be a live config handle, `policy` null or a live policy
/// handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lfbl_episode_return(
    cfg: *const LfblConfig,
    policy: *const LfblPolicy,
    out: *mut f64,
) -> LfblStatus {
    guard(|| {
        let cfg = &cfg.as_ref().ok_or(Failure::Null("cfg"))?.inner;
        let sc = harness::build_scenario(cfg, None)?;
        let zero = CorrectionPolicy::zero(cfg.trainer.out_gain);
        let policy = policy.as_ref().map_or(&zero, |p| &p.inner);
        let rec = harness::rollout(cfg, &sc, policy, 0.0, cfg.seed)?;
        write_out(out, &[rec.episode_return], "out")
    })
}
