//! C ABI over `tiara-core`.
//!
//! Every fallible call returns a [`TiaraStatus`]; on failure the message is
//! kept per thread and read with [`tiara_last_error_message`]. Windows and
//! blend schedules are opaque handles released with their `_free` function.
//! Matrices are row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use ndarray::Array2;
use tiara_core::attention::{
    motion_intensity, tiara_slice, AttentionLogits, FrequencyBand, TiaraParams, VideoLatentSlice,
};
use tiara_core::promptblend::{conditioning, BlendSchedule, EmbeddedPrompt};
use tiara_core::spectral::{dstft, make_window, Signal, Window, WindowKind};
use tiara_core::{alpha_from_closed_form, inconsistency_error, Error};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiaraStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Shape = 3,
    Parse = 4,
    Alignment = 5,
    Config = 6,
    AssumptionViolated = 7,
    Format = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiaraWindowKind {
    Rectangular = 0,
    Hann = 1,
    Gaussian = 2,
    Blackman = 3,
}

impl From<TiaraWindowKind> for WindowKind {
    fn from(kind: TiaraWindowKind) -> Self {
        match kind {
            TiaraWindowKind::Rectangular => WindowKind::Rectangular,
            TiaraWindowKind::Hann => WindowKind::Hann,
            TiaraWindowKind::Gaussian => WindowKind::Gaussian,
            TiaraWindowKind::Blackman => WindowKind::Blackman,
        }
    }
}

/// Opaque window handle.
pub struct TiaraWindow(Window);

/// Opaque multi-prompt schedule handle.
pub struct TiaraBlendSchedule(BlendSchedule);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TiaraStatus {
    match e {
        Error::Domain(_) => TiaraStatus::Domain,
        Error::Shape { .. } => TiaraStatus::Shape,
        Error::Parse { .. } => TiaraStatus::Parse,
        Error::Alignment { .. } => TiaraStatus::Alignment,
        Error::Config(_) => TiaraStatus::Config,
        Error::AssumptionViolated(_) => TiaraStatus::AssumptionViolated,
        Error::Format { .. } => TiaraStatus::Format,
        Error::Io(_) => TiaraStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

fn guard(body: impl FnOnce() -> FfiResult) -> TiaraStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => TiaraStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            TiaraStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic".into());
            TiaraStatus::Panic
        }
    }
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &'static str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, what: &'static str) -> FfiResult<&'a mut [f64]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_scalar<'a, T>(p: *mut T, what: &'static str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or(Failure::Null(what))
}

fn matrix(data: &[f64], rows: usize, cols: usize) -> FfiResult<Array2<f64>> {
    Array2::from_shape_vec((rows, cols), data.to_vec())
        .map_err(|e| Failure::Core(Error::Domain(format!("bad {rows}x{cols} buffer: {e}"))))
}

fn checked_len(rows: usize, cols: usize) -> FfiResult<usize> {
    rows.checked_mul(cols)
        .ok_or_else(|| Failure::Core(Error::Domain(format!("{rows}x{cols} overflows"))))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tiara_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tiara_window_new(
    kind: TiaraWindowKind,
    length: usize,
    out: *mut *mut TiaraWindow,
) -> TiaraStatus {
    guard(|| {
        let out = out_scalar(out, "out")?;
        let w = make_window(kind.into(), length)?;
        *out = Box::into_raw(Box::new(TiaraWindow(w)));
        Ok(())
    })
}

/// # Safety
/// `window` must come from [`tiara_window_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tiara_window_free(window: *mut TiaraWindow) {
    if !window.is_null() {
        drop(Box::from_raw(window));
    }
}

/// Window length, 0 for a null handle.
///
/// # Safety
/// `window` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tiara_window_len(window: *const TiaraWindow) -> usize {
    window.as_ref().map_or(0, |w| w.0.len())
}

/// Copy the coefficients into `out`, which holds `capacity` values.
///
/// # Safety
/// `out` must be valid for `capacity` writes.
#[no_mangle]
pub unsafe extern "C" fn tiara_window_coefficients(
    window: *const TiaraWindow,
    out: *mut f64,
    capacity: usize,
) -> TiaraStatus {
    guard(|| {
        let w = &handle(window, "window")?.0;
        if capacity < w.len() {
            return Err(Error::Shape {
                left: format!("{} coefficients", w.len()),
                right: format!("capacity {capacity}"),
            }
            .into());
        }
        output(out, w.len(), "out")?.copy_from_slice(w.coefficients());
        Ok(())
    })
}

/// One DSTFT coefficient of `x[0..n]` at shift `m`, frequency `k`.
///
/// # Safety
/// `x` must hold `n` values; `re` and `im` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tiara_dstft(
    x: *const f64,
    n: usize,
    window: *const TiaraWindow,
    m: i64,
    k: usize,
    re: *mut f64,
    im: *mut f64,
) -> TiaraStatus {
    guard(|| {
        let signal = Signal::new(input(x, n, "x")?.to_vec())?;
        let c = dstft(&signal, &handle(window, "window")?.0, m, k)?;
        *out_scalar(re, "re")? = c.re;
        *out_scalar(im, "im")? = c.im;
        Ok(())
    })
}

/// Motion intensity of attention row `row[0..n]` at frame `i`. A band with
/// `phi1 == 0 && phi2 == 0` selects the default for the padded row length.
///
/// # Safety
/// `row` must hold `n` values; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tiara_motion_intensity(
    row: *const f64,
    n: usize,
    window: *const TiaraWindow,
    i: usize,
    phi1: usize,
    phi2: usize,
    out: *mut f64,
) -> TiaraStatus {
    guard(|| {
        let w = &handle(window, "window")?.0;
        let signal = Signal::new(input(row, n, "row")?.to_vec())?;
        let band = if phi1 == 0 && phi2 == 0 {
            FrequencyBand::default_for(n + 2 * w.half())
        } else {
            FrequencyBand {
                low: phi1,
                high: phi2,
            }
        };
        *out_scalar(out, "out")? = motion_intensity(&signal, w, i, band)?;
        Ok(())
    })
}

/// Reweight one location: `logits` is `n x n`, `values` and `out_values`
/// are `n x channels`, `out_attention` (nullable) is `n x n`. A negative
/// `corner_size` or NaN `corner_penalty` selects the default.
///
/// # Safety
/// Buffers must hold the sizes above.
#[no_mangle]
pub unsafe extern "C" fn tiara_reweight(
    logits: *const f64,
    values: *const f64,
    n: usize,
    channels: usize,
    window: *const TiaraWindow,
    alpha: f64,
    corner_size: i64,
    corner_penalty: f64,
    out_values: *mut f64,
    out_attention: *mut f64,
) -> TiaraStatus {
    guard(|| {
        let nn = checked_len(n, n)?;
        let nc = checked_len(n, channels)?;
        let logits = AttentionLogits::new(matrix(input(logits, nn, "logits")?, n, n)?)?;
        let values = VideoLatentSlice::new(matrix(input(values, nc, "values")?, n, channels)?)?;
        let mut params = TiaraParams::new(handle(window, "window")?.0.clone(), alpha);
        params.corner_size = usize::try_from(corner_size).ok();
        params.corner_penalty = (!corner_penalty.is_nan()).then_some(corner_penalty);
        let out_values = output(out_values, nc, "out_values")?;
        let slice = tiara_slice(&logits, &values, &params)?;
        for (dst, src) in out_values.iter_mut().zip(slice.output.values().iter()) {
            *dst = *src;
        }
        if !out_attention.is_null() {
            let att = output(out_attention, nn, "out_attention")?;
            for (dst, src) in att.iter_mut().zip(slice.attention.rows().iter()) {
                *dst = *src;
            }
        }
        Ok(())
    })
}

/// High-frequency inconsistency of `x[0..n]` at shift `tau`, summing bins
/// `k_threshold..=n/2`.
///
/// # Safety
/// `x` must hold `n` values; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tiara_inconsistency_error(
    x: *const f64,
    n: usize,
    window: *const TiaraWindow,
    tau: i64,
    k_threshold: usize,
    out: *mut f64,
) -> TiaraStatus {
    guard(|| {
        let signal = Signal::new(input(x, n, "x")?.to_vec())?;
        *out_scalar(out, "out")? =
            inconsistency_error(&signal, &handle(window, "window")?.0, tau, k_threshold)?;
        Ok(())
    })
}

/// Reweighting strength that reaches reduction factor `eta`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tiara_alpha_from_closed_form(
    kappa: f64,
    eta: f64,
    a_min: f64,
    out: *mut f64,
) -> TiaraStatus {
    guard(|| {
        *out_scalar(out, "out")? = alpha_from_closed_form(kappa, eta, a_min)?;
        Ok(())
    })
}

/// `spans` holds `count` closed `[start, end]` pairs as `2 * count` values.
///
/// # Safety
/// `spans` must hold `2 * count` values; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tiara_schedule_new(
    spans: *const usize,
    count: usize,
    t1: f64,
    t2: f64,
    layer_threshold: usize,
    out: *mut *mut TiaraBlendSchedule,
) -> TiaraStatus {
    guard(|| {
        let out = out_scalar(out, "out")?;
        let flat: &[usize] = if count == 0 {
            &[]
        } else if spans.is_null() {
            return Err(Failure::Null("spans"));
        } else {
            slice::from_raw_parts(spans, checked_len(count, 2)?)
        };
        let pairs = flat.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        let schedule = BlendSchedule::new(pairs, (t1, t2), layer_threshold)?;
        *out = Box::into_raw(Box::new(TiaraBlendSchedule(schedule)));
        Ok(())
    })
}

/// # Safety
/// `schedule` must come from [`tiara_schedule_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tiara_schedule_free(schedule: *mut TiaraBlendSchedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

/// Frames covered by the schedule, 0 for a null handle.
///
/// # Safety
/// `schedule` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tiara_schedule_total_frames(schedule: *const TiaraBlendSchedule) -> usize {
    schedule.as_ref().map_or(0, |s| s.0.total_frames())
}

/// Conditioning for frame `n` at timestep `t` and layer `layer`.
/// `embedded` holds `prompts` aligned embeddings of `length x dim` each,
/// back to back; `out` receives `length x dim` values.
///
/// # Safety
/// Buffers must hold the sizes above.
#[no_mangle]
pub unsafe extern "C" fn tiara_conditioning(
    schedule: *const TiaraBlendSchedule,
    embedded: *const f64,
    prompts: usize,
    length: usize,
    dim: usize,
    n: usize,
    t: f64,
    layer: usize,
    out: *mut f64,
) -> TiaraStatus {
    guard(|| {
        let schedule = &handle(schedule, "schedule")?.0;
        let each = checked_len(length, dim)?;
        let all = input(embedded, checked_len(prompts, each)?, "embedded")?;
        let embedded = if each == 0 {
            Vec::new()
        } else {
            all.chunks_exact(each)
                .map(|c| Ok(EmbeddedPrompt::new(matrix(c, length, dim)?)?))
                .collect::<FfiResult<Vec<_>>>()?
        };
        let out = output(out, each, "out")?;
        let c = conditioning(schedule, &embedded, n, t, layer)?;
        for (dst, src) in out.iter_mut().zip(c.matrix().iter()) {
            *dst = *src;
        }
        Ok(())
    })
}
