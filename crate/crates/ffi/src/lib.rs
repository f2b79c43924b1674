//! C ABI for `selftomo`.
//!
//! Every function returns a [`SelftomoStatus`]; on failure a message is
//! available from [`selftomo_last_error`] on the same thread. Array arguments
//! have the fixed lengths given in their documentation. Rotations are nine
//! doubles in row-major order; a null rotation means the identity. Joint-POVM
//! tables use the outcome order `(+,+), (+,−), (−,+), (−,−)` for `(x, y)` and
//! are indexed `4·i1 + i2`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use selftomo::experiment::{run_experiment, ExperimentConfig};
use selftomo::joint::{
    decompose, fuzzy_joint_statistics, inferred_distribution, invert, negativity_report,
    reconstruct_outcome_vectors, JointOutcomeTable, JointPovm, JointTomographyOptions, QuasiPovm,
};
use selftomo::onoff::{self, ClickTable, OnOffParams, SqueezedVacuumParams};
use selftomo::protocol::{
    self, calibration_settings, derive_seed, JointProbTable, ProtocolSetting,
};
use selftomo::quantum::{BlochVector, MeasurementBasis, Rotation3};
use selftomo::reconstruction::{self, ReconstructionOptions, SettingProbabilities};
use selftomo::Error;

pub const SELFTOMO_BASIS_X: u32 = 0;
pub const SELFTOMO_BASIS_Y: u32 = 1;
pub const SELFTOMO_BASIS_Z: u32 = 2;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelftomoStatus {
    Ok = 0,
    NullPointer = 1,
    /// Parameters outside their physical range.
    InvalidArgument = 2,
    /// Statistics that no model in range reproduces.
    InconsistentData = 3,
    /// Efficiency cannot be identified at zero mean photon number.
    Unidentifiable = 4,
    Config = 5,
    Parse = 6,
    Io = 7,
    InvalidUtf8 = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SelftomoReconstruction {
    /// Canonical representative of `±S` (pivot component nonnegative).
    pub estimate: [f64; 3],
    /// 1-based index of the pivot component.
    pub pivot_axis: u32,
    pub clamped: bool,
    pub residual: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SelftomoOnOffParams {
    pub eta: f64,
    pub p_dark: f64,
}

/// `+` is a click, `−` no click.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SelftomoClickTable {
    pub mm: f64,
    pub pm: f64,
    pub mp: f64,
    pub pp: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelftomoSetting {
    pub basis: u32,
    /// Row-major proper rotation.
    pub rotation: [f64; 9],
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SelftomoNegativity {
    pub min_entry: f64,
    /// Index of the probed setting attaining `min_entry`.
    pub min_setting: usize,
    /// `(x1, y1, x2, y2)` as ±1.
    pub min_outcome: [i32; 4],
    pub min_eigenvalue: f64,
    pub nonclassical: bool,
}

/// Fuzzy joint POVM.
pub struct SelftomoJointPovm(JointPovm);

/// Quasi-POVM obtained by inverting a joint POVM.
pub struct SelftomoQuasiPovm(QuasiPovm);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(SelftomoStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::AsymmetricTable { .. }
            | Error::InconsistentStatistics { .. }
            | Error::DegenerateStatistics { .. }
            | Error::InconsistentTable { .. }
            | Error::InconsistentTomography { .. }
            | Error::OracleMismatch { .. } => SelftomoStatus::InconsistentData,
            Error::EtaUnidentifiable { .. } => SelftomoStatus::Unidentifiable,
            Error::Config { .. } => SelftomoStatus::Config,
            Error::Parse(_) => SelftomoStatus::Parse,
            Error::Io(_) => SelftomoStatus::Io,
            _ => SelftomoStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> SelftomoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            SelftomoStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            SelftomoStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(SelftomoStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn read<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    unsafe { p.as_ref() }.ok_or_else(|| null(name))
}

unsafe fn write<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    unsafe { p.as_mut() }.ok_or_else(|| null(name))
}

unsafe fn read_n<'a, const N: usize>(p: *const f64, name: &str) -> FfiResult<&'a [f64; N]> {
    unsafe { read(p.cast::<[f64; N]>(), name) }
}

unsafe fn write_n<'a, T, const N: usize>(p: *mut T, name: &str) -> FfiResult<&'a mut [T; N]> {
    unsafe { write(p.cast::<[T; N]>(), name) }
}

fn basis(b: u32) -> FfiResult<MeasurementBasis> {
    match b {
        SELFTOMO_BASIS_X => Ok(MeasurementBasis::X),
        SELFTOMO_BASIS_Y => Ok(MeasurementBasis::Y),
        SELFTOMO_BASIS_Z => Ok(MeasurementBasis::Z),
        _ => Err(Failure(
            SelftomoStatus::InvalidArgument,
            format!("unknown basis {b}"),
        )),
    }
}

fn rotation_from(m: &[f64; 9]) -> FfiResult<Rotation3> {
    let r = Rotation3::new([[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]])?;
    if !r.is_proper() {
        return Err(Error::ImproperRotation {
            det: r.determinant(),
        }
        .into());
    }
    Ok(r)
}

unsafe fn rotation(p: *const f64) -> FfiResult<Rotation3> {
    match unsafe { p.cast::<[f64; 9]>().as_ref() } {
        None => Ok(Rotation3::identity()),
        Some(m) => rotation_from(m),
    }
}

unsafe fn setting(b: u32, r: *const f64) -> FfiResult<ProtocolSetting> {
    Ok(ProtocolSetting::new(basis(b)?, unsafe { rotation(r) }?))
}

fn source(nbar: f64) -> FfiResult<SqueezedVacuumParams> {
    Ok(SqueezedVacuumParams::from_nbar(nbar)?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn selftomo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn selftomo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Seed for setting `index` derived from a base seed.
#[no_mangle]
pub extern "C" fn selftomo_derive_seed(base: u64, index: u64) -> u64 {
    derive_seed(base, index)
}

/// Six calibration probabilities `p(+,+)` in the order x0, y0, z0, x1, y1, z1.
///
/// # Safety
/// `s` must point to 3 doubles and `out` to 6.
#[no_mangle]
pub unsafe extern "C" fn selftomo_forward_probabilities(
    s: *const f64,
    out: *mut f64,
) -> SelftomoStatus {
    guard(|| {
        let s = BlochVector(*unsafe { read_n::<3>(s, "s") }?).checked_physical()?;
        *unsafe { write_n::<f64, 6>(out, "out") }? =
            reconstruction::forward_probabilities(&s).to_array();
        Ok(())
    })
}

/// Reconstructs `±S` from the six calibration probabilities.
/// `epsilon <= 0` selects the default clamping threshold.
///
/// # Safety
/// `p` must point to 6 doubles and `out` to a writable struct.
#[no_mangle]
pub unsafe extern "C" fn selftomo_reconstruct_bloch(
    p: *const f64,
    epsilon: f64,
    out: *mut SelftomoReconstruction,
) -> SelftomoStatus {
    guard(|| {
        let p = SettingProbabilities::from_array(*unsafe { read_n::<6>(p, "p") }?);
        let mut options = ReconstructionOptions::default();
        if epsilon > 0.0 {
            options.epsilon = epsilon;
        }
        let r = reconstruction::reconstruct_bloch(&p, &options)?;
        *unsafe { write(out, "out") }? = SelftomoReconstruction {
            estimate: r.estimate.0,
            pivot_axis: r.pivot_axis as u32,
            clamped: r.clamped,
            residual: r.residual,
        };
        Ok(())
    })
}

/// Joint table `(p(+,+), p(+,−), p(−,+), p(−,−))` of two qubit detectors.
///
/// # Safety
/// `s1`, `s2` must point to 3 doubles, `rotation` to 9 or be null, `out` to 4.
#[no_mangle]
pub unsafe extern "C" fn selftomo_joint_statistics(
    s1: *const f64,
    s2: *const f64,
    basis: u32,
    rotation: *const f64,
    out: *mut f64,
) -> SelftomoStatus {
    guard(|| {
        let s1 = BlochVector(*unsafe { read_n::<3>(s1, "s1") }?);
        let s2 = BlochVector(*unsafe { read_n::<3>(s2, "s2") }?);
        let setting = unsafe { setting(basis, rotation) }?;
        *unsafe { write_n::<f64, 4>(out, "out") }? =
            protocol::joint_statistics_closed(&s1, &s2, &setting)?.entries();
        Ok(())
    })
}

/// Multinomial counts for a 4-outcome table.
///
/// # Safety
/// `probs` must point to 4 doubles and `out` to 4 integers.
#[no_mangle]
pub unsafe extern "C" fn selftomo_sample_counts(
    probs: *const f64,
    shots: u64,
    seed: u64,
    out: *mut u64,
) -> SelftomoStatus {
    guard(|| {
        let t = JointProbTable::from_entries(*unsafe { read_n::<4>(probs, "probs") }?);
        if t.entries().iter().any(|p| p.is_nan() || *p < 0.0) || (t.total() - 1.0).abs() > 1e-9 {
            return Err(Failure(
                SelftomoStatus::InvalidArgument,
                "probabilities must be nonnegative and sum to 1".into(),
            ));
        }
        *unsafe { write_n::<u64, 4>(out, "out") }? =
            protocol::sample_counts(&t, shots, seed).counts;
        Ok(())
    })
}

fn onoff_params(d: &SelftomoOnOffParams) -> FfiResult<OnOffParams> {
    Ok(OnOffParams::new(d.eta, d.p_dark)?)
}

fn click_out(t: ClickTable) -> SelftomoClickTable {
    SelftomoClickTable {
        mm: t.mm,
        pm: t.pm,
        mp: t.mp,
        pp: t.pp,
    }
}

/// Closed-form click statistics for a two-mode squeezed vacuum of mean photon number `nbar`.
///
/// # Safety
/// `detector` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn selftomo_click_probabilities(
    detector: *const SelftomoOnOffParams,
    nbar: f64,
    out: *mut SelftomoClickTable,
) -> SelftomoStatus {
    guard(|| {
        let d = onoff_params(unsafe { read(detector, "detector") }?)?;
        *unsafe { write(out, "out") }? =
            click_out(onoff::click_probabilities_closed(&d, &source(nbar)?));
        Ok(())
    })
}

/// Truncated Fock-sum click statistics; the omitted weight is at most `tail`.
///
/// # Safety
/// `detector` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn selftomo_click_probabilities_oracle(
    detector: *const SelftomoOnOffParams,
    nbar: f64,
    tail: f64,
    out: *mut SelftomoClickTable,
) -> SelftomoStatus {
    guard(|| {
        let d = onoff_params(unsafe { read(detector, "detector") }?)?;
        *unsafe { write(out, "out") }? =
            click_out(onoff::click_probabilities_oracle(&d, &source(nbar)?, tail)?);
        Ok(())
    })
}

/// Fits efficiency and dark-count probability; `residual` may be null.
///
/// # Safety
/// `table` and `out` must be valid; `residual` may be null.
#[no_mangle]
pub unsafe extern "C" fn selftomo_fit_onoff(
    table: *const SelftomoClickTable,
    nbar: f64,
    out: *mut SelftomoOnOffParams,
    residual: *mut f64,
) -> SelftomoStatus {
    guard(|| {
        let t = unsafe { read(table, "table") }?;
        let fit = onoff::fit_onoff(
            &ClickTable {
                mm: t.mm,
                pm: t.pm,
                mp: t.mp,
                pp: t.pp,
            },
            nbar,
        )?;
        *unsafe { write(out, "out") }? = SelftomoOnOffParams {
            eta: fit.params.eta,
            p_dark: fit.params.p_dark,
        };
        if let Some(r) = unsafe { residual.as_mut() } {
            *r = fit.residual;
        }
        Ok(())
    })
}

/// Creates a joint POVM; release it with [`selftomo_joint_povm_free`].
///
/// # Safety
/// The vectors must point to 3 doubles each and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn selftomo_joint_povm_new(
    s_x: *const f64,
    s_y: *const f64,
    s_xy: *const f64,
    gamma_x: f64,
    gamma_y: f64,
    gamma_xy: f64,
    out: *mut *mut SelftomoJointPovm,
) -> SelftomoStatus {
    guard(|| {
        let out = unsafe { write(out, "out") }?;
        let j = JointPovm::new(
            BlochVector(*unsafe { read_n::<3>(s_x, "s_x") }?),
            BlochVector(*unsafe { read_n::<3>(s_y, "s_y") }?),
            BlochVector(*unsafe { read_n::<3>(s_xy, "s_xy") }?),
            gamma_x,
            gamma_y,
            gamma_xy,
        )?;
        *out = Box::into_raw(Box::new(SelftomoJointPovm(j)));
        Ok(())
    })
}

/// # Safety
/// `povm` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn selftomo_joint_povm_free(povm: *mut SelftomoJointPovm) {
    if !povm.is_null() {
        drop(unsafe { Box::from_raw(povm) });
    }
}

/// Parameters as `s_x, s_y, s_xy` (9 doubles) followed by `γ_X, γ_Y, γ_XY`.
///
/// # Safety
/// `povm` must be valid and `out` must point to 12 doubles.
#[no_mangle]
pub unsafe extern "C" fn selftomo_joint_povm_parameters(
    povm: *const SelftomoJointPovm,
    out: *mut f64,
) -> SelftomoStatus {
    guard(|| {
        let j = &unsafe { read(povm, "povm") }?.0;
        let out = unsafe { write_n::<f64, 12>(out, "out") }?;
        out[0..3].copy_from_slice(&j.s_x.0);
        out[3..6].copy_from_slice(&j.s_y.0);
        out[6..9].copy_from_slice(&j.s_xy.0);
        out[9..12].copy_from_slice(&[j.gamma_x, j.gamma_y, j.gamma_xy]);
        Ok(())
    })
}

/// Sixteen fuzzy joint probabilities for one setting.
///
/// # Safety
/// `povm` must be valid, `rotation` null or 9 doubles, `out` 16 doubles.
#[no_mangle]
pub unsafe extern "C" fn selftomo_joint_povm_statistics(
    povm: *const SelftomoJointPovm,
    basis: u32,
    rotation: *const f64,
    out: *mut f64,
) -> SelftomoStatus {
    guard(|| {
        let j = &unsafe { read(povm, "povm") }?.0;
        let setting = unsafe { setting(basis, rotation) }?;
        *unsafe { write_n::<f64, 16>(out, "out") }? = fuzzy_joint_statistics(j, &setting).entries;
        Ok(())
    })
}

/// Self-tomography from the six calibration tables (calibration order
/// x0, y0, z0, x1, y1, z1; 16 entries each). Returns a new POVM handle;
/// `completeness` may be null.
///
/// # Safety
/// `tables` must point to 96 doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn selftomo_joint_tomography(
    tables: *const f64,
    completeness_tolerance: f64,
    out: *mut *mut SelftomoJointPovm,
    completeness: *mut f64,
) -> SelftomoStatus {
    guard(|| {
        let raw = unsafe { read_n::<96>(tables, "tables") }?;
        let out = unsafe { write(out, "out") }?;
        let tables: [JointOutcomeTable; 6] = std::array::from_fn(|i| {
            let (b, r) = calibration_settings()[i];
            JointOutcomeTable {
                setting: ProtocolSetting::new(b, r.rotation()),
                entries: std::array::from_fn(|k| raw[16 * i + k]),
            }
        });
        let mut options = JointTomographyOptions::default();
        if completeness_tolerance > 0.0 {
            options.completeness_tolerance = completeness_tolerance;
        }
        let report = reconstruct_outcome_vectors(&tables, &options)?;
        if let Some(c) = unsafe { completeness.as_mut() } {
            *c = report.completeness_residual;
        }
        *out = Box::into_raw(Box::new(SelftomoJointPovm(decompose(&report.vectors).povm)));
        Ok(())
    })
}

/// Inverts a joint POVM; release the result with [`selftomo_quasi_povm_free`].
///
/// # Safety
/// `povm` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn selftomo_joint_povm_invert(
    povm: *const SelftomoJointPovm,
    out: *mut *mut SelftomoQuasiPovm,
) -> SelftomoStatus {
    guard(|| {
        let j = &unsafe { read(povm, "povm") }?.0;
        let out = unsafe { write(out, "out") }?;
        *out = Box::into_raw(Box::new(SelftomoQuasiPovm(invert(j)?)));
        Ok(())
    })
}

/// # Safety
/// `quasi` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn selftomo_quasi_povm_free(quasi: *mut SelftomoQuasiPovm) {
    if !quasi.is_null() {
        drop(unsafe { Box::from_raw(quasi) });
    }
}

/// The four quasi-POVM vectors, 3 doubles each, in outcome order.
///
/// # Safety
/// `quasi` must be valid and `out` must point to 12 doubles.
#[no_mangle]
pub unsafe extern "C" fn selftomo_quasi_povm_vectors(
    quasi: *const SelftomoQuasiPovm,
    out: *mut f64,
) -> SelftomoStatus {
    guard(|| {
        let q = &unsafe { read(quasi, "quasi") }?.0;
        let out = unsafe { write_n::<f64, 12>(out, "out") }?;
        for (i, v) in q.vectors.iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(&v.0);
        }
        Ok(())
    })
}

/// Sixteen inferred (possibly negative) joint probabilities for one setting.
///
/// # Safety
/// `quasi` must be valid, `rotation` null or 9 doubles, `out` 16 doubles.
#[no_mangle]
pub unsafe extern "C" fn selftomo_quasi_povm_inferred(
    quasi: *const SelftomoQuasiPovm,
    basis: u32,
    rotation: *const f64,
    out: *mut f64,
) -> SelftomoStatus {
    guard(|| {
        let q = &unsafe { read(quasi, "quasi") }?.0;
        let setting = unsafe { setting(basis, rotation) }?;
        *unsafe { write_n::<f64, 16>(out, "out") }? = inferred_distribution(q, &setting).entries;
        Ok(())
    })
}

/// Negativity certificate over `count` probe settings (at least one).
///
/// # Safety
/// `quasi` and `out` must be valid and `settings` must point to `count` entries.
#[no_mangle]
pub unsafe extern "C" fn selftomo_quasi_povm_negativity(
    quasi: *const SelftomoQuasiPovm,
    settings: *const SelftomoSetting,
    count: usize,
    out: *mut SelftomoNegativity,
) -> SelftomoStatus {
    guard(|| {
        let q = &unsafe { read(quasi, "quasi") }?.0;
        if settings.is_null() {
            return Err(null("settings"));
        }
        if count == 0 {
            return Err(Failure(
                SelftomoStatus::InvalidArgument,
                "at least one setting is required".into(),
            ));
        }
        let raw = unsafe { std::slice::from_raw_parts(settings, count) };
        let probes = raw
            .iter()
            .map(|s| {
                Ok(ProtocolSetting::new(
                    basis(s.basis)?,
                    rotation_from(&s.rotation)?,
                ))
            })
            .collect::<FfiResult<Vec<_>>>()?;
        let cert = negativity_report(q, &probes);
        let min = cert.min_entry.expect("nonempty probes");
        let out = unsafe { write(out, "out") }?;
        *out = SelftomoNegativity {
            min_entry: min.value,
            min_setting: probes.iter().position(|p| *p == min.setting).unwrap_or(0),
            min_outcome: min.outcome.map(|s| s.value() as i32),
            min_eigenvalue: cert.min_eigenvalue,
            nonclassical: cert.nonclassical,
        };
        Ok(())
    })
}

/// Runs an experiment from a JSON config and returns the JSON result
/// document; release it with [`selftomo_string_free`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn selftomo_run_experiment_json(
    config_json: *const c_char,
    out: *mut *mut c_char,
) -> SelftomoStatus {
    guard(|| {
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        let out = unsafe { write(out, "out") }?;
        *out = ptr::null_mut();
        let text = unsafe { CStr::from_ptr(config_json) }
            .to_str()
            .map_err(|e| Failure(SelftomoStatus::InvalidUtf8, e.to_string()))?;
        let doc = run_experiment(&ExperimentConfig::from_json_str(text)?)?;
        let json = CString::new(doc.to_json()?)
            .map_err(|e| Failure(SelftomoStatus::Parse, e.to_string()))?;
        *out = json.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn selftomo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
