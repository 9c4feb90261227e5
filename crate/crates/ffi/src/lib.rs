//! C ABI over the scene, prompt, parsing and metric routines.
//!
//! Every function returns an [`SbStatus`]. On failure the message is kept per
//! thread and can be read with [`sb_last_error_message`]. Strings handed out
//! by this library are freed with [`sb_string_free`]; scenes with
//! [`sb_scene_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use storebench::choice::extract_container_choice;
use storebench::choice::ParseStatus;
use storebench::eval::fleiss_kappa;
use storebench::features::{featurize, FeatureConfig};
use storebench::geometry::{bbox_iou, iou, BBox, Polygon, Region};
use storebench::prompts::build_structured;
use storebench::scene::{AnchorVocabulary, ContainerTable, DetectionsDoc, GlobalIds};
use storebench::verbalize::describe_scene;
use storebench::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed or out-of-range input.
    InvalidInput = 3,
    /// A well-formed request that could not be completed.
    Failed = 4,
    /// Internal bug; the call had no effect.
    Panic = 5,
}

/// A featurized scene built from one detections document.
pub struct SbScene {
    table: ContainerTable,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SbStatus, msg: impl Into<String>) -> SbStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> SbStatus {
    let status = if e.is_validation() || matches!(e, Error::InvalidGeometry(_)) {
        SbStatus::InvalidInput
    } else {
        SbStatus::Failed
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> SbStatus) -> SbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(SbStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, SbStatus> {
    if p.is_null() {
        return Err(fail(SbStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SbStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn to_c(s: String) -> Result<*mut c_char, SbStatus> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| fail(SbStatus::Failed, "string contains NUL"))
}

macro_rules! need {
    ($p:expr, $what:literal) => {
        if $p.is_null() {
            return fail(SbStatus::NullPointer, concat!($what, " is null"));
        }
    };
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Builds a featurized scene from a detections JSON document using the
/// default anchor vocabulary and feature settings.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_scene_from_json(
    json: *const c_char,
    out: *mut *mut SbScene,
) -> SbStatus {
    guard(|| {
        need!(out, "out");
        let text = tri!(read_str(json, "json"));
        let table = DetectionsDoc::parse(text, Path::new("<ffi>"))
            .and_then(|d| d.into_table(&AnchorVocabulary::default(), &mut GlobalIds::new()))
            .and_then(|t| featurize(t, &FeatureConfig::default()));
        match table {
            Ok(table) => {
                *out = Box::into_raw(Box::new(SbScene { table }));
                SbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `scene` must come from [`sb_scene_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sb_scene_free(scene: *mut SbScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// # Safety
/// `scene` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_scene_container_count(
    scene: *const SbScene,
    out: *mut usize,
) -> SbStatus {
    guard(|| {
        need!(scene, "scene");
        need!(out, "out");
        *out = (*scene).table.len();
        SbStatus::Ok
    })
}

/// Container descriptions, one per line, in container order.
///
/// # Safety
/// `scene` must be a live handle; `out` must be writable. Free the result
/// with [`sb_string_free`].
#[no_mangle]
pub unsafe extern "C" fn sb_scene_describe(
    scene: *const SbScene,
    out: *mut *mut c_char,
) -> SbStatus {
    guard(|| {
        need!(scene, "scene");
        need!(out, "out");
        match describe_scene(&(*scene).table) {
            Ok(lines) => {
                *out = tri!(to_c(lines.join("\n")));
                SbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// System and user text of the structured prompt for `item`.
///
/// # Safety
/// `scene` must be a live handle, `item` a NUL-terminated string, and both
/// outputs writable. Free both results with [`sb_string_free`].
#[no_mangle]
pub unsafe extern "C" fn sb_prompt_structured(
    scene: *const SbScene,
    item: *const c_char,
    out_system: *mut *mut c_char,
    out_user: *mut *mut c_char,
) -> SbStatus {
    guard(|| {
        need!(scene, "scene");
        need!(out_system, "out_system");
        need!(out_user, "out_user");
        let item = tri!(read_str(item, "item"));
        let bundle = match describe_scene(&(*scene).table).and_then(|d| build_structured(item, &d))
        {
            Ok(b) => b,
            Err(e) => return from_error(e),
        };
        let system = tri!(to_c(bundle.system_text.unwrap_or_default()));
        let user = match to_c(bundle.user_text) {
            Ok(u) => u,
            Err(s) => {
                drop(CString::from_raw(system));
                return s;
            }
        };
        *out_system = system;
        *out_user = user;
        SbStatus::Ok
    })
}

/// Pulls a container id out of free model text. `out_id` receives the id or
/// -1 for "none". `out_parse` receives 0 when the answer followed the
/// requested format, 1 when it was recovered from a stray number, 2 when
/// nothing was found.
///
/// # Safety
/// `text` must be a NUL-terminated string; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_extract_container_choice(
    text: *const c_char,
    out_id: *mut i64,
    out_parse: *mut i32,
) -> SbStatus {
    guard(|| {
        need!(out_id, "out_id");
        need!(out_parse, "out_parse");
        let text = tri!(read_str(text, "text"));
        let ex = extract_container_choice(text);
        *out_id = ex.choice.container_id().map_or(-1, i64::from);
        *out_parse = match ex.status {
            ParseStatus::Format => 0,
            ParseStatus::Fallback => 1,
            ParseStatus::Unparsed => 2,
        };
        SbStatus::Ok
    })
}

/// IoU of two boxes given as `[x_min, y_min, x_max, y_max]`.
///
/// # Safety
/// `a` and `b` must each point at 4 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_iou_bbox(a: *const f64, b: *const f64, out: *mut f64) -> SbStatus {
    guard(|| {
        need!(a, "a");
        need!(b, "b");
        need!(out, "out");
        let ra = std::slice::from_raw_parts(a, 4);
        let rb = std::slice::from_raw_parts(b, 4);
        let (ba, bb) = match (
            BBox::new(ra[0], ra[1], ra[2], ra[3]),
            BBox::new(rb[0], rb[1], rb[2], rb[3]),
        ) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(e), _) | (_, Err(e)) => return from_error(e),
        };
        *out = bbox_iou(&ba, &bb);
        SbStatus::Ok
    })
}

unsafe fn polygon(xy: *const f64, n: usize) -> Result<Polygon, SbStatus> {
    if xy.is_null() {
        return Err(fail(SbStatus::NullPointer, "vertex array is null"));
    }
    let flat = std::slice::from_raw_parts(xy, 2 * n);
    let coords: Vec<(f64, f64)> = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    Polygon::from_coords(&coords).map_err(from_error)
}

/// IoU of two simple polygons, each given as `n` interleaved x,y pairs.
/// Rasterized on a 512x512 grid over both shapes.
///
/// # Safety
/// `a_xy` must point at `2 * a_n` doubles and `b_xy` at `2 * b_n`; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_iou_polygons(
    a_xy: *const f64,
    a_n: usize,
    b_xy: *const f64,
    b_n: usize,
    out: *mut f64,
) -> SbStatus {
    guard(|| {
        need!(out, "out");
        let a = tri!(polygon(a_xy, a_n));
        let b = tri!(polygon(b_xy, b_n));
        match iou(&Region::Polygon(a), &Region::Polygon(b)) {
            Ok(v) => {
                *out = v;
                SbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Fleiss' kappa over a row-major `subjects x categories` count matrix.
///
/// # Safety
/// `counts` must point at `subjects * categories` values; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sb_fleiss_kappa(
    counts: *const u32,
    subjects: usize,
    categories: usize,
    out: *mut f64,
) -> SbStatus {
    guard(|| {
        need!(counts, "counts");
        need!(out, "out");
        if categories == 0 {
            return fail(SbStatus::InvalidInput, "categories must be positive");
        }
        let flat = std::slice::from_raw_parts(counts, subjects * categories);
        let rows: Vec<Vec<u32>> = flat.chunks_exact(categories).map(<[u32]>::to_vec).collect();
        match fleiss_kappa(&rows) {
            Ok(k) => {
                *out = k;
                SbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
