//! C ABI over the correction engine.
//!
//! Every fallible function returns a [`SegcStatus`]; on failure the message
//! is available from [`segc_last_error`] on the same thread. Handles are
//! opaque and freed with their `_free` function. Buffers and strings
//! returned by the library are freed with [`segc_bytes_free`] and
//! [`segc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use segcritic::eval::{boundary_iou, confusion_matrix, miou};
use segcritic::mask::{decode_bin, encode_bin, ClassId, Face, ImageRaster, InterventionType, RegionSelection, SegmentationMask};
use segcritic::propagation::PropagationError;
use segcritic::region::{wand_select, Connectivity, RegionError, WandParams};
use segcritic::store::{Store, StoreError};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotFound = 3,
    Conflict = 4,
    Format = 5,
    Io = 6,
    Internal = 7,
    Panic = 8,
}

/// Opaque store handle.
pub struct SegcStore(Store);

/// Opaque mask handle.
pub struct SegcMask(SegmentationMask);

/// Opaque selection handle.
pub struct SegcSelection(RegionSelection);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SegcStatus, String);

impl Failure {
    fn arg(msg: impl Into<String>) -> Self {
        Failure(SegcStatus::InvalidArgument, msg.into())
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::NotFound(_) | StoreError::NotInitialized(_) => SegcStatus::NotFound,
            StoreError::Conflict(_)
            | StoreError::AlreadyDecided(_)
            | StoreError::AlreadyInitialized(_)
            | StoreError::Propagation(PropagationError::NotHumanProvenance(_)) => SegcStatus::Conflict,
            StoreError::Region(_) | StoreError::Invalid(_) => SegcStatus::InvalidArgument,
            StoreError::Mask(_) | StoreError::Format(_) | StoreError::Json(_) => SegcStatus::Format,
            StoreError::Io(_) => SegcStatus::Io,
            _ => SegcStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

impl From<RegionError> for Failure {
    fn from(e: RegionError) -> Self {
        Failure::arg(e.to_string())
    }
}

impl From<segcritic::mask::MaskError> for Failure {
    fn from(e: segcritic::mask::MaskError) -> Self {
        Failure(SegcStatus::Format, e.to_string())
    }
}

impl From<segcritic::eval::EvalError> for Failure {
    fn from(e: segcritic::eval::EvalError) -> Self {
        Failure::arg(e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SegcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SegcStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside segcritic".into());
            SegcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SegcStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::arg(format!("{name} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(Failure(SegcStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(SegcStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(SegcStatus::NullPointer, format!("{name} is null")))
}

fn pixels(w: u32, h: u32) -> Result<usize, Failure> {
    if w == 0 || h == 0 {
        return Err(Failure::arg(format!("invalid dimensions {w}x{h}")));
    }
    Ok(w as usize * h as usize)
}

fn connectivity(c: u32) -> Result<Connectivity, Failure> {
    match c {
        4 => Ok(Connectivity::Four),
        8 => Ok(Connectivity::Eight),
        _ => Err(Failure::arg(format!("connectivity must be 4 or 8, got {c}"))),
    }
}

fn intervention(code: u32) -> Result<InterventionType, Failure> {
    match code {
        0 => Ok(InterventionType::FeatureSuppression),
        1 => Ok(InterventionType::BoundaryRefinement),
        2 => Ok(InterventionType::ContextReweighting),
        _ => Err(Failure::arg(format!("unknown intervention type {code}"))),
    }
}

fn face(name: &str) -> Result<Face, Failure> {
    name.parse().map_err(Failure::arg)
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn segc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn segc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn segc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `data`/`len` must be null/0 or a buffer returned by this library.
#[no_mangle]
pub unsafe extern "C" fn segc_bytes_free(data: *mut u8, len: usize) {
    if !data.is_null() {
        drop(Vec::from_raw_parts(data, len, len));
    }
}

fn give_bytes(v: Vec<u8>, out: &mut *mut u8, out_len: &mut usize) {
    let mut b = v.into_boxed_slice();
    *out_len = b.len();
    *out = b.as_mut_ptr();
    std::mem::forget(b);
}

/// Builds a mask from `width * height` row-major labels.
///
/// # Safety
/// `labels` must point to `width * height` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn segc_mask_new(labels: *const u8, width: u32, height: u32, out: *mut *mut SegcMask) -> SegcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let n = pixels(width, height)?;
        let m = SegmentationMask::new(width, height, slice_arg(labels, n, "labels")?.to_vec())?;
        *out = Box::into_raw(Box::new(SegcMask(m)));
        Ok(())
    })
}

/// # Safety
/// `mask` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn segc_mask_free(mask: *mut SegcMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// # Safety
/// `mask` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn segc_mask_width(mask: *const SegcMask) -> u32 {
    mask.as_ref().map_or(0, |m| m.0.width())
}

/// # Safety
/// `mask` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn segc_mask_height(mask: *const SegcMask) -> u32 {
    mask.as_ref().map_or(0, |m| m.0.height())
}

/// Pointer to the row-major labels, valid while the handle lives.
///
/// # Safety
/// `mask` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn segc_mask_labels(mask: *const SegcMask) -> *const u8 {
    mask.as_ref().map_or(ptr::null(), |m| m.0.labels().as_ptr())
}

/// Encodes a mask in the SEGB format. Free the buffer with `segc_bytes_free`.
///
/// # Safety
/// `mask` must be a live handle; `out` and `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn segc_mask_encode_bin(mask: *const SegcMask, out: *mut *mut u8, out_len: *mut usize) -> SegcStatus {
    guard(|| {
        let m = ref_arg(mask, "mask")?;
        give_bytes(encode_bin(&m.0), out_arg(out, "out")?, out_arg(out_len, "out_len")?);
        Ok(())
    })
}

/// # Safety
/// `data` must point to `len` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn segc_mask_decode_bin(data: *const u8, len: usize, out: *mut *mut SegcMask) -> SegcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = decode_bin(slice_arg(data, len, "data")?)?;
        *out = Box::into_raw(Box::new(SegcMask(m)));
        Ok(())
    })
}

/// Magic-wand selection on a row-major RGB image (`3 * width * height`
/// bytes). `connectivity` is 4 or 8.
///
/// # Safety
/// `rgb` must point to `3 * width * height` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn segc_wand_select(
    rgb: *const u8,
    width: u32,
    height: u32,
    x: u32,
    y: u32,
    tolerance: f64,
    connectivity_code: u32,
    out: *mut *mut SegcSelection,
) -> SegcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let n = pixels(width, height)?;
        let image = ImageRaster::new(width, height, slice_arg(rgb, 3 * n, "rgb")?.to_vec())?;
        let params = WandParams::new(tolerance, connectivity(connectivity_code)?)?;
        let sel = wand_select(&image, (x, y), params)?;
        *out = Box::into_raw(Box::new(SegcSelection(sel)));
        Ok(())
    })
}

/// # Safety
/// `sel` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn segc_selection_free(sel: *mut SegcSelection) {
    if !sel.is_null() {
        drop(Box::from_raw(sel));
    }
}

/// # Safety
/// `sel` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn segc_selection_count(sel: *const SegcSelection) -> usize {
    sel.as_ref().map_or(0, |s| s.0.count())
}

/// # Safety
/// `sel` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn segc_selection_contains(sel: *const SegcSelection, x: u32, y: u32) -> bool {
    sel.as_ref().is_some_and(|s| x < s.0.width() && y < s.0.height() && s.0.contains_xy(x, y))
}

/// Writes the selection as a `width * height` byte mask of 0/1 into `out`.
///
/// # Safety
/// `sel` must be a live handle; `out` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn segc_selection_to_bytes(sel: *const SegcSelection, out: *mut u8, len: usize) -> SegcStatus {
    guard(|| {
        let s = ref_arg(sel, "sel")?;
        if out.is_null() {
            return Err(Failure(SegcStatus::NullPointer, "out is null".into()));
        }
        if len != s.0.len() {
            return Err(Failure::arg(format!("buffer holds {len} bytes, selection has {} pixels", s.0.len())));
        }
        let buf = std::slice::from_raw_parts_mut(out, len);
        buf.fill(0);
        for i in s.0.iter() {
            buf[i] = 1;
        }
        Ok(())
    })
}

/// Mean IoU over classes present in either mask.
///
/// # Safety
/// Both masks must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn segc_miou(pred: *const SegcMask, gt: *const SegcMask, out: *mut f64) -> SegcStatus {
    guard(|| {
        let cm = confusion_matrix(&ref_arg(pred, "pred")?.0, &ref_arg(gt, "gt")?.0, None)?;
        *out_arg(out, "out")? = miou(&cm)?.mean;
        Ok(())
    })
}

/// Boundary IoU of `class` with band width `d`. Writes NaN when both bands
/// are empty.
///
/// # Safety
/// Both masks must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn segc_boundary_iou(
    pred: *const SegcMask,
    gt: *const SegcMask,
    class: u8,
    d: u32,
    out: *mut f64,
) -> SegcStatus {
    guard(|| {
        let c = ClassId::new(class).ok_or_else(|| Failure::arg(format!("class {class} out of range")))?;
        let v = boundary_iou(&ref_arg(pred, "pred")?.0, &ref_arg(gt, "gt")?.0, c, d)?;
        *out_arg(out, "out")? = v.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Opens an initialized store directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn segc_store_open(path: *const c_char, out: *mut *mut SegcStore) -> SegcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let store = Store::open(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(SegcStore(store)));
        Ok(())
    })
}

/// # Safety
/// `store` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn segc_store_free(store: *mut SegcStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Working mask of a face: its latest version, else its prediction.
///
/// # Safety
/// `store` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn segc_store_current_mask(
    store: *const SegcStore,
    site: *const c_char,
    face_name: *const c_char,
    out: *mut *mut SegcMask,
) -> SegcStatus {
    guard(|| {
        let s = ref_arg(store, "store")?;
        let out = out_arg(out, "out")?;
        let (site, f) = (str_arg(site, "site")?, face(str_arg(face_name, "face")?)?);
        let m = s.0.current_mask(site, f)?.ok_or_else(|| Failure(SegcStatus::NotFound, format!("no mask for {site}/{f}")))?;
        *out = Box::into_raw(Box::new(SegcMask(m)));
        Ok(())
    })
}

/// Applies a human correction and appends it to the log. The new record id
/// is written to `out_record_id`; free it with `segc_string_free`.
/// `intervention_code` is 0 feature suppression, 1 boundary refinement,
/// 2 context reweighting.
///
/// # Safety
/// Handles must be live; strings NUL-terminated; `out_record_id` writable.
#[no_mangle]
pub unsafe extern "C" fn segc_store_submit_correction(
    store: *mut SegcStore,
    site: *const c_char,
    face_name: *const c_char,
    sel: *const SegcSelection,
    class: u8,
    intervention_code: u32,
    interactions: u32,
    elapsed_s: f64,
    out_record_id: *mut *mut c_char,
) -> SegcStatus {
    guard(|| {
        let s = store.as_mut().ok_or_else(|| Failure(SegcStatus::NullPointer, "store is null".into()))?;
        let out = out_arg(out_record_id, "out_record_id")?;
        let (site, f) = (str_arg(site, "site")?, face(str_arg(face_name, "face")?)?);
        let sel = &ref_arg(sel, "sel")?.0;
        let r = s.0.submit_correction(site, f, sel, class, intervention(intervention_code)?, interactions, elapsed_s)?;
        *out = CString::new(r.record_id).expect("ids have no NUL").into_raw();
        Ok(())
    })
}

/// Undoes a live record. Only the latest edit on its image can be undone.
///
/// # Safety
/// `store` must be a live handle; `record_id` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn segc_store_undo(store: *mut SegcStore, record_id: *const c_char) -> SegcStatus {
    guard(|| {
        let s = store.as_mut().ok_or_else(|| Failure(SegcStatus::NullPointer, "store is null".into()))?;
        s.0.undo(str_arg(record_id, "record_id")?)?;
        Ok(())
    })
}

/// Propagates a human record; writes the number of auto-applied records and
/// review items produced.
///
/// # Safety
/// `store` must be a live handle; `record_id` NUL-terminated; outputs
/// writable.
#[no_mangle]
pub unsafe extern "C" fn segc_store_propagate(
    store: *mut SegcStore,
    record_id: *const c_char,
    out_auto: *mut u32,
    out_review: *mut u32,
) -> SegcStatus {
    guard(|| {
        let s = store.as_mut().ok_or_else(|| Failure(SegcStatus::NullPointer, "store is null".into()))?;
        let (a, r) = (out_arg(out_auto, "out_auto")?, out_arg(out_review, "out_review")?);
        let summary = s.0.propagate(str_arg(record_id, "record_id")?)?;
        *a = summary.auto_applied.len() as u32;
        *r = summary.review.len() as u32;
        Ok(())
    })
}

/// Accepts (`accept != 0`) or rejects a review item.
///
/// # Safety
/// `store` must be a live handle; `item_id` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn segc_store_review(store: *mut SegcStore, item_id: *const c_char, accept: bool) -> SegcStatus {
    guard(|| {
        let s = store.as_mut().ok_or_else(|| Failure(SegcStatus::NullPointer, "store is null".into()))?;
        s.0.review(str_arg(item_id, "item_id")?, accept)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        unsafe { CStr::from_ptr(segc_last_error()).to_string_lossy().into_owned() }
    }

    #[test]
    fn mask_round_trip_through_bin() {
        let labels: Vec<u8> = (0..12).map(|i| (i % 7) as u8).collect();
        unsafe {
            let mut m = ptr::null_mut();
            assert_eq!(segc_mask_new(labels.as_ptr(), 4, 3, &mut m), SegcStatus::Ok);
            let (mut buf, mut len) = (ptr::null_mut(), 0usize);
            assert_eq!(segc_mask_encode_bin(m, &mut buf, &mut len), SegcStatus::Ok);
            assert_eq!(len, 16 + 12);
            let mut back = ptr::null_mut();
            assert_eq!(segc_mask_decode_bin(buf, len, &mut back), SegcStatus::Ok);
            assert_eq!((segc_mask_width(back), segc_mask_height(back)), (4, 3));
            assert_eq!(std::slice::from_raw_parts(segc_mask_labels(back), 12), &labels[..]);
            let mut score = 0.0;
            assert_eq!(segc_miou(m, back, &mut score), SegcStatus::Ok);
            assert_eq!(score, 1.0);
            segc_bytes_free(buf, len);
            segc_mask_free(m);
            segc_mask_free(back);
        }
    }

    #[test]
    fn errors_are_reported() {
        unsafe {
            let bad = [9u8; 4];
            let mut m = ptr::null_mut();
            assert_eq!(segc_mask_new(bad.as_ptr(), 2, 2, &mut m), SegcStatus::Format);
            assert!(last_error().contains("out of range"));
            assert_eq!(segc_mask_new(ptr::null(), 2, 2, &mut m), SegcStatus::NullPointer);
            assert_eq!(segc_mask_decode_bin(b"nope".as_ptr(), 4, &mut m), SegcStatus::Format);
            let rgb = [0u8; 12];
            let mut s = ptr::null_mut();
            assert_eq!(segc_wand_select(rgb.as_ptr(), 2, 2, 5, 0, 10.0, 4, &mut s), SegcStatus::InvalidArgument);
            assert!(last_error().contains("outside"));
            assert_eq!(segc_wand_select(rgb.as_ptr(), 2, 2, 0, 0, 10.0, 6, &mut s), SegcStatus::InvalidArgument);
            let mut st = ptr::null_mut();
            let p = CString::new("/nonexistent/segc").unwrap();
            assert_eq!(segc_store_open(p.as_ptr(), &mut st), SegcStatus::NotFound);
        }
    }

    #[test]
    fn wand_matches_library() {
        let rgb: Vec<u8> = (0..16).flat_map(|i| if i % 4 < 2 { [200, 0, 0] } else { [0, 0, 200] }).collect();
        unsafe {
            let mut s = ptr::null_mut();
            assert_eq!(segc_wand_select(rgb.as_ptr(), 4, 4, 0, 0, 5.0, 4, &mut s), SegcStatus::Ok);
            assert_eq!(segc_selection_count(s), 8);
            assert!(segc_selection_contains(s, 1, 3) && !segc_selection_contains(s, 2, 0));
            let mut bytes = [0u8; 16];
            assert_eq!(segc_selection_to_bytes(s, bytes.as_mut_ptr(), 16), SegcStatus::Ok);
            assert_eq!(bytes.iter().filter(|&&b| b == 1).count(), 8);
            segc_selection_free(s);
        }
    }

    #[test]
    fn store_correction_undo_and_conflicts() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::init(dir.path(), Default::default()).unwrap();
        let src = tempfile::tempdir().unwrap();
        for site in ["a", "b", "c"] {
            let img = ImageRaster::from_fn(6, 6, |x, _| if x < 3 { [250, 250, 250] } else { [10, 10, 10] }).unwrap();
            let p = src.path().join(site);
            std::fs::create_dir_all(&p).unwrap();
            std::fs::write(p.join("flat.png"), segcritic::mask::encode_rgb_png(&img)).unwrap();
        }
        store.ingest(src.path(), &Default::default()).unwrap();
        drop(store);

        let path = CString::new(dir.path().to_str().unwrap()).unwrap();
        let (site, flat) = (CString::new("a").unwrap(), CString::new("flat").unwrap());
        unsafe {
            let mut st = ptr::null_mut();
            assert_eq!(segc_store_open(path.as_ptr(), &mut st), SegcStatus::Ok);
            let img: Vec<u8> = (0..36).flat_map(|i| if i % 6 < 3 { [250u8; 3] } else { [10u8; 3] }).collect();
            let mut sel = ptr::null_mut();
            assert_eq!(segc_wand_select(img.as_ptr(), 6, 6, 0, 0, 1.0, 4, &mut sel), SegcStatus::Ok);
            let mut id = ptr::null_mut();
            assert_eq!(segc_store_submit_correction(st, site.as_ptr(), flat.as_ptr(), sel, 1, 0, 1, 3.0, &mut id), SegcStatus::Ok);
            assert_eq!(CStr::from_ptr(id).to_str().unwrap(), "r0001");

            let mut m = ptr::null_mut();
            assert_eq!(segc_store_current_mask(st, site.as_ptr(), flat.as_ptr(), &mut m), SegcStatus::Ok);
            let labels = std::slice::from_raw_parts(segc_mask_labels(m), 36);
            assert!((0..36).all(|i| labels[i] == if i % 6 < 3 { 1 } else { 0 }));
            segc_mask_free(m);

            let (mut a, mut r) = (0u32, 0u32);
            let auto = CString::new("missing").unwrap();
            assert_eq!(segc_store_propagate(st, auto.as_ptr(), &mut a, &mut r), SegcStatus::NotFound);
            assert_eq!(segc_store_review(st, auto.as_ptr(), true), SegcStatus::NotFound);
            assert_eq!(segc_store_submit_correction(st, site.as_ptr(), flat.as_ptr(), sel, 9, 0, 1, 1.0, &mut id), SegcStatus::InvalidArgument);

            assert_eq!(segc_store_undo(st, id), SegcStatus::Ok);
            assert_eq!(segc_store_current_mask(st, site.as_ptr(), flat.as_ptr(), &mut m), SegcStatus::Ok);
            assert!(std::slice::from_raw_parts(segc_mask_labels(m), 36).iter().all(|&l| l == 0));
            segc_mask_free(m);
            segc_string_free(id);
            segc_selection_free(sel);
            segc_store_free(st);
        }
        assert!(dir.path().join("masks/a/flat/v2.bin").exists());
    }

    #[test]
    fn version_is_a_c_string() {
        let v = unsafe { CStr::from_ptr(segc_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
