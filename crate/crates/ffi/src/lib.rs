//! C ABI over the eo2sar classifier.
//!
//! Every function returns an [`Eo2sarStatus`]; on failure a description is
//! available from [`eo2sar_last_error_message`] on the same thread. Models
//! are opaque handles created by [`eo2sar_model_load`] and released with
//! [`eo2sar_model_free`]. Chips are `3 × S × S` `float` planes, channel-major,
//! values in [0, 1], where `S` is [`eo2sar_model_input_size`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use eo2sar::cam::{self, CamMethod};
use eo2sar::dataset::{bin_incidence_angle, AngleBin};
use eo2sar::model::{infer_logits, Checkpoint};
use eo2sar::{Error, Tensor};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eo2sarStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument is out of range, or a string is not valid UTF-8.
    InvalidArgument = 2,
    /// File or data could not be read or is malformed.
    Data = 3,
    /// Input or computation produced NaN or infinity.
    NonFinite = 4,
    /// The checkpoint file does not exist.
    MissingCheckpoint = 5,
    /// The checkpoint exists but is not a valid checkpoint.
    BadCheckpoint = 6,
    /// Internal error, including a caught panic.
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eo2sarCamMethod {
    GradCam = 0,
    GapCam = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eo2sarAngleBin {
    /// (19, 25] degrees.
    Small = 0,
    /// (25, 35] degrees.
    Medium = 1,
    /// (35, 47] degrees.
    Large = 2,
}

/// Opaque model handle.
pub struct Eo2sarModel {
    checkpoint: Checkpoint,
}

/// Pass as `target_class` to explain the predicted class.
pub const EO2SAR_PREDICTED_CLASS: i32 = -1;

/// Chips per forward pass in [`eo2sar_model_predict`].
const PREDICT_BATCH: usize = 64;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("interior NULs removed"));
}

fn status_of(err: &Error) -> Eo2sarStatus {
    match err {
        Error::MissingCheckpoint(_) => Eo2sarStatus::MissingCheckpoint,
        Error::BadMagic { .. } | Error::VersionMismatch { .. } | Error::Truncated { .. } | Error::ShapeTable { .. } => {
            Eo2sarStatus::BadCheckpoint
        }
        Error::NonFinite { .. } => Eo2sarStatus::NonFinite,
        Error::Parameter(_) | Error::Config(_) | Error::Architecture(_) => Eo2sarStatus::InvalidArgument,
        Error::Dimension { .. } | Error::Contract(_) => Eo2sarStatus::Internal,
        Error::Row { .. } | Error::Data(_) | Error::Image { .. } | Error::Io { .. } | Error::Json(_) | Error::Csv(_) => {
            Eo2sarStatus::Data
        }
    }
}

struct Failure(Eo2sarStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(Eo2sarStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, recording any error or panic for `eo2sar_last_error_message`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> Eo2sarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            Eo2sarStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            Eo2sarStatus::Internal
        }
    }
}

unsafe fn model_ref<'a>(model: *const Eo2sarModel) -> Result<&'a Eo2sarModel, Failure> {
    model.as_ref().ok_or_else(|| null("model"))
}

unsafe fn chip_tensor(model: &Eo2sarModel, chip: *const f32) -> Result<Tensor<f32>, Failure> {
    if chip.is_null() {
        return Err(null("chip"));
    }
    let c = &model.checkpoint.config;
    let len = c.input_channels * c.input_size * c.input_size;
    let data = std::slice::from_raw_parts(chip, len).to_vec();
    Ok(Tensor::from_vec(&[c.input_channels, c.input_size, c.input_size], data)?)
}

/// Load a checkpoint. On success `*out_model` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eo2sar_model_load(path: *const c_char, out_model: *mut *mut Eo2sarModel) -> Eo2sarStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out_model.is_null() {
            return Err(null("out_model"));
        }
        *out_model = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(Eo2sarStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
        let checkpoint = Checkpoint::load(Path::new(path))?;
        *out_model = Box::into_raw(Box::new(Eo2sarModel { checkpoint }));
        Ok(())
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `model` must come from `eo2sar_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eo2sar_model_free(model: *mut Eo2sarModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Chip side length `S` the model expects.
///
/// # Safety
/// `model` must be a live handle and `out_size` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eo2sar_model_input_size(model: *const Eo2sarModel, out_size: *mut usize) -> Eo2sarStatus {
    guard(|| {
        let model = model_ref(model)?;
        let out = out_size.as_mut().ok_or_else(|| null("out_size"))?;
        *out = model.checkpoint.config.input_size;
        Ok(())
    })
}

/// Classify `count` chips stored back to back at `chips`.
///
/// Writes `2 · count` logits (no_ship, ship per chip) to `out_logits` and,
/// when `out_labels` is not null, `count` class indices (0 = no ship, 1 = ship).
///
/// # Safety
/// `chips` must hold `count · 3 · S · S` floats, `out_logits` room for
/// `2 · count` floats and `out_labels`, if given, room for `count` bytes.
#[no_mangle]
pub unsafe extern "C" fn eo2sar_model_predict(
    model: *const Eo2sarModel,
    chips: *const f32,
    count: usize,
    out_logits: *mut f32,
    out_labels: *mut u8,
) -> Eo2sarStatus {
    guard(|| {
        let model = model_ref(model)?;
        if count == 0 {
            return Ok(());
        }
        if out_logits.is_null() {
            return Err(null("out_logits"));
        }
        let c = &model.checkpoint.config;
        let per = c.input_channels * c.input_size * c.input_size;
        let tensors: Vec<Tensor<f32>> = (0..count)
            .map(|i| chip_tensor(model, chips.wrapping_add(i * per)))
            .collect::<Result<_, _>>()?;
        let logits = infer_logits(&model.checkpoint.params, c, &tensors, PREDICT_BATCH)?;
        let out = std::slice::from_raw_parts_mut(out_logits, 2 * count);
        for (dst, row) in out.chunks_mut(2).zip(&logits) {
            dst.copy_from_slice(row);
        }
        if !out_labels.is_null() {
            let labels = std::slice::from_raw_parts_mut(out_labels, count);
            for (dst, [no_ship, ship]) in labels.iter_mut().zip(&logits) {
                *dst = u8::from(ship > no_ship);
            }
        }
        Ok(())
    })
}

/// Class activation map of one chip, upsampled to `S × S` and scaled to a
/// maximum of 1 (all zeros when nothing activates).
///
/// `target_class` is 0 (no ship), 1 (ship) or `EO2SAR_PREDICTED_CLASS`.
/// The class actually explained is written to `out_class` when it is not null.
///
/// # Safety
/// `chip` must hold `3 · S · S` floats and `out_map` room for `S · S` floats.
#[no_mangle]
pub unsafe extern "C" fn eo2sar_model_cam(
    model: *const Eo2sarModel,
    method: Eo2sarCamMethod,
    chip: *const f32,
    target_class: i32,
    out_map: *mut f32,
    out_class: *mut u32,
) -> Eo2sarStatus {
    guard(|| {
        let model = model_ref(model)?;
        if out_map.is_null() {
            return Err(null("out_map"));
        }
        let chip = chip_tensor(model, chip)?;
        let (params, config) = (&model.checkpoint.params, &model.checkpoint.config);
        let class = match target_class {
            EO2SAR_PREDICTED_CLASS => cam::predicted_class(params, config, &chip)?,
            c if c >= 0 && (c as usize) < config.num_classes => c as usize,
            c => return Err(Failure(Eo2sarStatus::InvalidArgument, format!("target class {c} out of range"))),
        };
        let method = match method {
            Eo2sarCamMethod::GradCam => CamMethod::GradCam,
            Eo2sarCamMethod::GapCam => CamMethod::GapCam,
        };
        let heatmap = cam::compute(method, params, config, &chip, class)?;
        std::slice::from_raw_parts_mut(out_map, heatmap.map.len()).copy_from_slice(heatmap.map.data());
        if let Some(out) = out_class.as_mut() {
            *out = class as u32;
        }
        Ok(())
    })
}

/// Incidence-angle stratum of `angle` degrees; defined on (19, 47].
///
/// # Safety
/// `out_bin` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eo2sar_bin_incidence_angle(angle: f64, out_bin: *mut Eo2sarAngleBin) -> Eo2sarStatus {
    guard(|| {
        let out = out_bin.as_mut().ok_or_else(|| null("out_bin"))?;
        *out = match bin_incidence_angle(angle)? {
            AngleBin::Small => Eo2sarAngleBin::Small,
            AngleBin::Medium => Eo2sarAngleBin::Medium,
            AngleBin::Large => Eo2sarAngleBin::Large,
        };
        Ok(())
    })
}

/// Message for the last failed call on this thread, or "" after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn eo2sar_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, e.g. "0.1.0". Static storage.
#[no_mangle]
pub extern "C" fn eo2sar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
