//! C ABI over the segmentation pipeline.
//!
//! Objects are opaque handles created and released by this library. Every
//! fallible call returns a [`PsStatus`]; on failure a description is
//! available from [`ps_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use primseg::evaluation::evaluate_labels;
use primseg::frames::load_frames;
use primseg::geometry::Vec3;
use primseg::io::ply::load_ply;
use primseg::merging::load_boxes;
use primseg::primitives::compute_primitives;
use primseg::{segment_scene, Error, Partition, PipelineConfig, PointCloud};

/// Result of every fallible call. Values match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    Io = 2,
    Ply = 3,
    MissingFrame = 4,
    Dimension = 5,
    Config = 6,
    Raster = 7,
    Boxes = 8,
    Labels = 9,
    Scene = 10,
    Invalid = 11,
    NullPointer = 12,
    Utf8 = 13,
    Panic = 14,
}

impl From<&Error> for PsStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            2 => PsStatus::Io,
            3 => PsStatus::Ply,
            4 => PsStatus::MissingFrame,
            5 => PsStatus::Dimension,
            6 => PsStatus::Config,
            7 => PsStatus::Raster,
            8 => PsStatus::Boxes,
            9 => PsStatus::Labels,
            10 => PsStatus::Scene,
            _ => PsStatus::Invalid,
        }
    }
}

/// Opaque point cloud.
pub struct PsCloud {
    cloud: PointCloud,
}

/// Opaque per-point label array.
pub struct PsLabels {
    partition: Partition,
}

/// Scores returned by `ps_evaluate`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PsEvalSummary {
    pub map: f64,
    pub ap50: f64,
    pub ap25: f64,
    pub num_predictions: usize,
    pub num_ground_truth: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(PsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(PsStatus::from(&e), e.to_string())
    }
}

fn run(f: impl FnOnce() -> Result<(), Failure>) -> PsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PsStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            PsStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(PsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(PsStatus::Utf8, format!("{what} is not valid UTF-8")))
}

unsafe fn config_from(json: *const c_char) -> Result<PipelineConfig, Failure> {
    if json.is_null() {
        return Ok(PipelineConfig::default());
    }
    Ok(PipelineConfig::from_json(c_str(json, "config")?)?)
}

unsafe fn store<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ps_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a PLY point cloud.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_cloud_load_ply(path: *const c_char, out: *mut *mut PsCloud) -> PsStatus {
    run(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cloud = load_ply(c_str(path, "path")?)?;
        store(out, PsCloud { cloud });
        Ok(())
    })
}

/// Build a cloud from `n` interleaved xyz positions and rgb colors in [0, 1].
///
/// # Safety
/// `xyz` and `rgb` must each point to `3 * n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ps_cloud_from_arrays(
    xyz: *const f64,
    rgb: *const f64,
    n: usize,
    out: *mut *mut PsCloud,
) -> PsStatus {
    run(|| {
        if xyz.is_null() || rgb.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let xyz = std::slice::from_raw_parts(xyz, 3 * n);
        let rgb = std::slice::from_raw_parts(rgb, 3 * n);
        let positions = xyz.chunks_exact(3).map(Vec3::from_column_slice).collect();
        let colors = rgb.chunks_exact(3).map(Vec3::from_column_slice).collect();
        let cloud = PointCloud::new(positions, colors)?;
        cloud.validate()?;
        store(out, PsCloud { cloud });
        Ok(())
    })
}

/// Number of points, 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ps_cloud_len(cloud: *const PsCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.cloud.len())
}

/// Release a cloud. Null is ignored.
///
/// # Safety
/// `cloud` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_cloud_free(cloud: *mut PsCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Over-segment a cloud into primitives. `config_json` may be null.
///
/// # Safety
/// `cloud` must be a live handle, `config_json` null or NUL-terminated,
/// `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ps_primitives(
    cloud: *const PsCloud,
    config_json: *const c_char,
    out: *mut *mut PsLabels,
) -> PsStatus {
    run(|| {
        let cloud = cloud.as_ref().ok_or_else(|| null("cloud"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = config_from(config_json)?;
        let partition = compute_primitives(&cloud.cloud, &cfg.primitives())?;
        store(out, PsLabels { partition });
        Ok(())
    })
}

/// Run the full pipeline. `boxes_path` and `config_json` may be null;
/// without boxes no refinement is done.
///
/// # Safety
/// `cloud` must be a live handle, string arguments null (where allowed) or
/// NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ps_segment(
    cloud: *const PsCloud,
    frames_dir: *const c_char,
    boxes_path: *const c_char,
    config_json: *const c_char,
    out: *mut *mut PsLabels,
) -> PsStatus {
    run(|| {
        let cloud = cloud.as_ref().ok_or_else(|| null("cloud"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = config_from(config_json)?;
        let frames = load_frames(PathBuf::from(c_str(frames_dir, "frames_dir")?))?;
        let boxes = if boxes_path.is_null() {
            None
        } else {
            Some(load_boxes(c_str(boxes_path, "boxes_path")?)?)
        };
        let outcome = segment_scene(&cloud.cloud, &frames, boxes.as_deref(), &cfg)?;
        store(
            out,
            PsLabels {
                partition: outcome.partition,
            },
        );
        Ok(())
    })
}

/// Number of labels, 0 for a null handle.
///
/// # Safety
/// `labels` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_labels_len(labels: *const PsLabels) -> usize {
    labels.as_ref().map_or(0, |l| l.partition.len())
}

/// Number of distinct labels (instances or primitives).
///
/// # Safety
/// `labels` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_labels_count(labels: *const PsLabels) -> usize {
    labels.as_ref().map_or(0, |l| l.partition.num_segments)
}

/// Pointer to `ps_labels_len` labels, valid while the handle lives.
///
/// # Safety
/// `labels` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_labels_data(labels: *const PsLabels) -> *const i64 {
    labels.as_ref().map_or(ptr::null(), |l| l.partition.labels.as_ptr())
}

/// Release a label array. Null is ignored.
///
/// # Safety
/// `labels` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_labels_free(labels: *mut PsLabels) {
    if !labels.is_null() {
        drop(Box::from_raw(labels));
    }
}

/// Score `n` predicted labels against `n` ground-truth labels (-1 = unlabeled).
///
/// # Safety
/// `pred` and `gt` must point to `n` values each; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ps_evaluate(pred: *const i64, gt: *const i64, n: usize, out: *mut PsEvalSummary) -> PsStatus {
    run(|| {
        if pred.is_null() || gt.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let report = evaluate_labels(std::slice::from_raw_parts(pred, n), std::slice::from_raw_parts(gt, n))?;
        *out = PsEvalSummary {
            map: report.map,
            ap50: report.ap50,
            ap25: report.ap25,
            num_predictions: report.num_predictions,
            num_ground_truth: report.num_ground_truth,
        };
        Ok(())
    })
}
