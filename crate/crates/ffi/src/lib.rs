//! C ABI for scoring images with a saved dual-branch model.
//!
//! Every function returns an [`NriqaStatus`]; on failure the message is
//! available from [`nriqa_last_error_message`] on the same thread. Handles
//! are opaque and must be released with [`nriqa_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use nriqa::color::{ColorSpace, Image};
use nriqa::model::{DualBranchModel, ModelConfig};
use nriqa::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NriqaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Decode = 4,
    Model = 5,
    Compute = 6,
    Panic = 7,
}

pub const NRIQA_SPACE_RGB: u32 = 0;
pub const NRIQA_SPACE_YUV: u32 = 1;
pub const NRIQA_SPACE_LAB: u32 = 2;

/// A loaded model. Scoring does not mutate it, so one handle may be shared
/// across threads for concurrent `nriqa_score_*` calls.
pub struct NriqaModel {
    inner: DualBranchModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> NriqaStatus {
    match e {
        Error::Io { .. } => NriqaStatus::Io,
        Error::UnsupportedFormat(_) | Error::CorruptImage { .. } => NriqaStatus::Decode,
        Error::BadMagic { .. }
        | Error::UnsupportedVersion { .. }
        | Error::Truncated { .. }
        | Error::DuplicateName(_)
        | Error::UnsupportedDtype(_)
        | Error::Malformed(_)
        | Error::MissingTensor(_)
        | Error::TensorShape { .. }
        | Error::Config { .. } => NriqaStatus::Model,
        Error::InvalidArgument(_) | Error::Shape { .. } | Error::WrongColorSpace { .. } => NriqaStatus::InvalidArgument,
        _ => NriqaStatus::Compute,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (NriqaStatus, String)>) -> NriqaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NriqaStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            NriqaStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (NriqaStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (NriqaStatus, String) {
    (NriqaStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (NriqaStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| (NriqaStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

fn space_arg(space: u32) -> Result<ColorSpace, (NriqaStatus, String)> {
    ColorSpace::ALL
        .get(space as usize)
        .copied()
        .ok_or_else(|| (NriqaStatus::InvalidArgument, format!("unknown color space code {space}")))
}

fn store_model(out: *mut *mut NriqaModel, model: DualBranchModel) {
    let h = Box::into_raw(Box::new(NriqaModel { inner: model }));
    unsafe { *out = h };
}

/// Loads weights from `weights_path`. `config_path` may be null, in which
/// case the `.cfg` file next to the weights is used. On success `*out`
/// receives a new handle.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nriqa_model_load(
    weights_path: *const c_char,
    config_path: *const c_char,
    out: *mut *mut NriqaModel,
) -> NriqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let w = unsafe { path_arg(weights_path, "weights_path") }?;
        let c = if config_path.is_null() {
            None
        } else {
            Some(unsafe { path_arg(config_path, "config_path") }?)
        };
        let model = DualBranchModel::load(&w, c.as_deref()).map_err(lib_err)?;
        store_model(out, model);
        Ok(())
    })
}

/// Seeded randomly initialized model with Tiny encoders, for wiring tests.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nriqa_model_new_tiny(seed: u64, out: *mut *mut NriqaModel) -> NriqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model =
            DualBranchModel::random(ModelConfig::tiny(), &mut ChaCha8Rng::seed_from_u64(seed)).map_err(lib_err)?;
        store_model(out, model);
        Ok(())
    })
}

/// Saves weights to `weights_path` and the config next to them.
///
/// # Safety
/// `model` must come from this library; the string must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn nriqa_model_save(model: *const NriqaModel, weights_path: *const c_char) -> NriqaStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        let p = unsafe { path_arg(weights_path, "weights_path") }?;
        m.inner.save(&p).map_err(lib_err)
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nriqa_model_free(model: *mut NriqaModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Scores a PNG or PPM file. `space` is one of `NRIQA_SPACE_*`.
///
/// # Safety
/// `model` must be a live handle, `path` NUL-terminated, `out_score` writable.
#[no_mangle]
pub unsafe extern "C" fn nriqa_score_file(
    model: *const NriqaModel,
    path: *const c_char,
    space: u32,
    out_score: *mut f64,
) -> NriqaStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        if out_score.is_null() {
            return Err(null("out_score"));
        }
        let p = unsafe { path_arg(path, "path") }?;
        let space = space_arg(space)?;
        let img = nriqa::data::decode_image(&p).map_err(lib_err)?;
        let s = m.inner.predict(&img, space).map_err(lib_err)?;
        unsafe { *out_score = s };
        Ok(())
    })
}

/// Scores an interleaved 8-bit RGB raster. `stride` is the byte distance
/// between rows (at least `3 * width`).
///
/// # Safety
/// `pixels` must hold `stride * height` readable bytes; `out_score` writable.
#[no_mangle]
pub unsafe extern "C" fn nriqa_score_rgb8(
    model: *const NriqaModel,
    pixels: *const u8,
    width: usize,
    height: usize,
    stride: usize,
    space: u32,
    out_score: *mut f64,
) -> NriqaStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        if out_score.is_null() {
            return Err(null("out_score"));
        }
        if width == 0 || height == 0 || stride < width * 3 {
            return Err((
                NriqaStatus::InvalidArgument,
                format!("bad raster geometry {width}x{height} stride {stride}"),
            ));
        }
        let space = space_arg(space)?;
        let bytes = unsafe { std::slice::from_raw_parts(pixels, stride * (height - 1) + width * 3) };
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            data.extend(bytes[y * stride..y * stride + width * 3].iter().map(|&b| b as f32 / 255.0));
        }
        let img = Image::rgb(width, height, data).map_err(lib_err)?;
        let s = m.inner.predict(&img, space).map_err(lib_err)?;
        unsafe { *out_score = s };
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nriqa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nriqa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
