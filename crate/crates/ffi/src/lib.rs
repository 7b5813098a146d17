//! C ABI over the `grcnet` library.
//!
//! Every fallible function returns a [`GrcnetStatus`]; on failure the
//! message is available from [`grcnet_last_error_message`] on the same
//! thread. Handles are opaque and must be released with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use grcnet::cli::GafArchive;
use grcnet::gaf::Encoder;
use grcnet::nn::{load_checkpoint, GrcNet, Shape, Tensor};
use grcnet::train_eval::{compute_metrics, ConfusionMatrix};
use grcnet::Error;

/// Result codes. Values 2 to 7 match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrcnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dataset = 3,
    Io = 4,
    Format = 5,
    Divergence = 6,
    Numeric = 7,
    Panic = 8,
}

/// Loaded model checkpoint.
pub struct GrcnetModel {
    model: GrcNet,
}

/// Loaded image archive.
pub struct GrcnetArchive {
    archive: GafArchive,
}

/// Headline metrics of a 5x5 confusion matrix.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GrcnetMetrics {
    pub accuracy: f64,
    pub macro_recall: f64,
    pub macro_precision: f64,
    pub macro_f1: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> GrcnetStatus {
    match err.exit_code() {
        2 => GrcnetStatus::InvalidArgument,
        3 => GrcnetStatus::Dataset,
        4 => GrcnetStatus::Io,
        5 => GrcnetStatus::Format,
        6 => GrcnetStatus::Divergence,
        _ => GrcnetStatus::Numeric,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GrcnetStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return GrcnetStatus::Ok,
        Ok(Err(Failure::Null(what))) => (GrcnetStatus::NullPointer, format!("{what} is null")),
        Ok(Err(Failure::Invalid(msg))) => (GrcnetStatus::InvalidArgument, msg),
        Ok(Err(Failure::Lib(e))) => (status_of(&e), e.to_string()),
        Err(_) => (GrcnetStatus::Panic, "internal panic".to_string()),
    };
    set_last_error(msg);
    status
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(())
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    non_null(p, "path")?;
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Failure::Invalid("path is not valid UTF-8".into()))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn grcnet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Encodes one window as a `paa_target x paa_target` GASF image.
///
/// # Safety
/// `window` must point to `len` readable doubles and `out` to
/// `paa_target * paa_target` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn grcnet_encode_gasf(
    window: *const f64,
    len: usize,
    paa_target: usize,
    out: *mut f64,
) -> GrcnetStatus {
    guard(|| {
        non_null(window, "window")?;
        non_null(out, "out")?;
        let values = std::slice::from_raw_parts(window, len);
        let image = Encoder::gasf(paa_target).encode(values)?;
        std::slice::from_raw_parts_mut(out, image.len()).copy_from_slice(&image);
        Ok(())
    })
}

/// `x*y - sqrt(1-x^2)*sqrt(1-y^2)` for `x, y` in `[-1, 1]`.
///
/// # Safety
/// `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn grcnet_penalized_inner(x: f64, y: f64, out: *mut f64) -> GrcnetStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = grcnet::gaf::penalized_inner(x, y)?;
        Ok(())
    })
}

/// Loads a checkpoint. On success `*out` owns a handle for
/// [`grcnet_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn grcnet_model_load(path: *const c_char, out: *mut *mut GrcnetModel) -> GrcnetStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let model = load_checkpoint(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(GrcnetModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`grcnet_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn grcnet_model_free(model: *mut GrcnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Side of the square images the model accepts, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grcnet_model_input_size(model: *const GrcnetModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config().input_height)
}

/// Predicts class indices (0 = Z ... 4 = S) for `count` row-major images.
///
/// # Safety
/// `images` must point to `count * n * n` doubles, where `n` is
/// [`grcnet_model_input_size`], and `labels` to `count` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn grcnet_model_predict(
    model: *const GrcnetModel,
    images: *const f64,
    count: usize,
    labels: *mut u8,
) -> GrcnetStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(images, "images")?;
        non_null(labels, "labels")?;
        let model = &(*model).model;
        let cfg = model.config();
        let shape = Shape::new(count, cfg.input_height, cfg.input_width, cfg.input_channels);
        let data = std::slice::from_raw_parts(images, shape.len()).to_vec();
        let predictions = model.predict(&Tensor::from_vec(shape, data)?)?;
        let out = std::slice::from_raw_parts_mut(labels, count);
        for (o, p) in out.iter_mut().zip(predictions) {
            *o = p as u8;
        }
        Ok(())
    })
}

/// Opens an image archive. On success `*out` owns a handle for
/// [`grcnet_archive_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn grcnet_archive_open(path: *const c_char, out: *mut *mut GrcnetArchive) -> GrcnetStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let archive = GafArchive::read(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(GrcnetArchive { archive }));
        Ok(())
    })
}

/// # Safety
/// `archive` must come from [`grcnet_archive_open`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn grcnet_archive_free(archive: *mut GrcnetArchive) {
    if !archive.is_null() {
        drop(Box::from_raw(archive));
    }
}

/// Number of images, or 0 for NULL.
///
/// # Safety
/// `archive` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grcnet_archive_len(archive: *const GrcnetArchive) -> usize {
    archive.as_ref().map_or(0, |a| a.archive.len())
}

/// Image side, or 0 for NULL.
///
/// # Safety
/// `archive` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grcnet_archive_image_size(archive: *const GrcnetArchive) -> usize {
    archive.as_ref().map_or(0, |a| a.archive.size)
}

/// Copies image `index` into `pixels` (`n * n` floats) and its class into
/// `label`.
///
/// # Safety
/// `archive` must be a live handle, `pixels` must have room for `n * n`
/// floats and `label` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grcnet_archive_get(
    archive: *const GrcnetArchive,
    index: usize,
    pixels: *mut f32,
    label: *mut u8,
) -> GrcnetStatus {
    guard(|| {
        non_null(archive, "archive")?;
        non_null(pixels, "pixels")?;
        non_null(label, "label")?;
        let a = &(*archive).archive;
        let entry = a.entries.get(index).ok_or_else(|| {
            Failure::Invalid(format!("index {index} out of range for {} images", a.len()))
        })?;
        std::slice::from_raw_parts_mut(pixels, entry.pixels.len()).copy_from_slice(&entry.pixels);
        *label = entry.label.index() as u8;
        Ok(())
    })
}

/// Metrics of a row-major 5x5 confusion matrix (rows are true classes).
///
/// # Safety
/// `confusion` must point to 25 readable counts and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn grcnet_compute_metrics(confusion: *const u64, out: *mut GrcnetMetrics) -> GrcnetStatus {
    guard(|| {
        non_null(confusion, "confusion")?;
        non_null(out, "out")?;
        let rows: Vec<Vec<u64>> = std::slice::from_raw_parts(confusion, 25)
            .chunks(5)
            .map(<[u64]>::to_vec)
            .collect();
        let m = compute_metrics(&ConfusionMatrix::from_rows(&rows)?)?;
        *out = GrcnetMetrics {
            accuracy: m.accuracy,
            macro_recall: m.macro_recall,
            macro_precision: m.macro_precision,
            macro_f1: m.macro_f1,
        };
        Ok(())
    })
}
