//! C ABI over `scn-core`.
//!
//! Datasets and models are opaque handles created by `scn_*_new`/`scn_*_load`
//! functions and released with the matching `_free`. Every fallible call
//! returns an [`ScnStatus`]; on failure the message is available from
//! [`scn_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use scn_core::experiment::{make_batches, AnyModel, EVAL_BATCH};
use scn_core::graphdata::{build_dataset, num_classes, read_jsonl, DatasetName, DatasetSpec, Graph};
use scn_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    Numeric = 6,
    Panic = 7,
}

/// Opaque list of graphs.
pub struct ScnDataset {
    graphs: Vec<Graph>,
}

/// Opaque trained model.
pub struct ScnModel {
    model: AnyModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ScnStatus {
    match e {
        Error::Shape { .. } | Error::Contract(_) | Error::Param(_) => ScnStatus::InvalidArgument,
        Error::Io { .. } => ScnStatus::Io,
        Error::Format { .. } | Error::Json(_) => ScnStatus::Format,
        Error::Config(_) => ScnStatus::Config,
        Error::Numeric(_) => ScnStatus::Numeric,
    }
}

fn fail(status: ScnStatus, msg: impl Into<String>) -> ScnStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), ScnStatus>) -> ScnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScnStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(ScnStatus::Panic, msg)
        }
    }
}

fn lift<T>(r: scn_core::Result<T>) -> Result<T, ScnStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, ScnStatus> {
    if p.is_null() {
        return Err(fail(ScnStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(ScnStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, ScnStatus> {
    p.as_ref()
        .ok_or_else(|| fail(ScnStatus::NullArgument, format!("{what} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, ScnStatus> {
    p.as_mut()
        .ok_or_else(|| fail(ScnStatus::NullArgument, format!("{what} is null")))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn scn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn scn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a synthetic benchmark (`grid`, `grid_house`, `stars` or
/// `house_colour`). A `count` of 0 keeps the default size.
///
/// # Safety
/// `name` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scn_dataset_generate(
    name: *const c_char,
    seed: u64,
    count: usize,
    out: *mut *mut ScnDataset,
) -> ScnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let name = lift(DatasetName::parse(str_arg(name, "name")?))?;
        let mut spec = DatasetSpec::default_for(name, seed);
        if count > 0 {
            spec.count = count;
        }
        let graphs = lift(build_dataset(&spec))?;
        *out = Box::into_raw(Box::new(ScnDataset { graphs }));
        Ok(())
    })
}

/// Reads a JSON-lines dataset.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scn_dataset_load(path: *const c_char, out: *mut *mut ScnDataset) -> ScnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let graphs = lift(read_jsonl(Path::new(str_arg(path, "path")?)))?;
        *out = Box::into_raw(Box::new(ScnDataset { graphs }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scn_dataset_free(ds: *mut ScnDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of graphs; 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scn_dataset_len(ds: *const ScnDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.graphs.len())
}

/// Node feature width; 0 for a null or empty dataset.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scn_dataset_num_features(ds: *const ScnDataset) -> usize {
    ds.as_ref().and_then(|d| d.graphs.first()).map_or(0, Graph::feature_dim)
}

/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scn_dataset_num_classes(ds: *const ScnDataset) -> usize {
    ds.as_ref().map_or(0, |d| num_classes(&d.graphs))
}

/// Node count and label of graph `index`.
///
/// # Safety
/// `ds` must be a live handle; `nodes` and `label` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn scn_dataset_graph_info(
    ds: *const ScnDataset,
    index: usize,
    nodes: *mut usize,
    label: *mut usize,
) -> ScnStatus {
    guard(|| {
        let ds = ref_arg(ds, "dataset")?;
        let (nodes, label) = (out_arg(nodes, "nodes")?, out_arg(label, "label")?);
        let g = ds.graphs.get(index).ok_or_else(|| {
            fail(
                ScnStatus::InvalidArgument,
                format!("index {index} out of range for {} graphs", ds.graphs.len()),
            )
        })?;
        *nodes = g.n;
        *label = g.label;
        Ok(())
    })
}

/// Loads a checkpoint written by `scn train`.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scn_model_load(path: *const c_char, out: *mut *mut ScnModel) -> ScnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let model = lift(AnyModel::load(Path::new(str_arg(path, "path")?)))?;
        *out = Box::into_raw(Box::new(ScnModel { model }));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scn_model_free(m: *mut ScnModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scn_model_num_features(m: *const ScnModel) -> usize {
    m.as_ref().map_or(0, |m| m.model.features())
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scn_model_num_classes(m: *const ScnModel) -> usize {
    m.as_ref().map_or(0, |m| m.model.classes())
}

/// Predicts a class for every graph of `ds`, writing `scn_dataset_len(ds)`
/// entries into `labels`, whose capacity is `capacity`.
///
/// # Safety
/// `m` and `ds` must be live handles; `labels` must hold `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn scn_model_predict(
    m: *const ScnModel,
    ds: *const ScnDataset,
    labels: *mut usize,
    capacity: usize,
) -> ScnStatus {
    guard(|| {
        let m = ref_arg(m, "model")?;
        let ds = ref_arg(ds, "dataset")?;
        if labels.is_null() {
            return Err(fail(ScnStatus::NullArgument, "labels is null"));
        }
        let n = ds.graphs.len();
        if capacity < n {
            return Err(fail(
                ScnStatus::InvalidArgument,
                format!("capacity {capacity} is below dataset length {n}"),
            ));
        }
        if n > 0 && m.model.features() != ds.graphs[0].feature_dim() {
            return Err(fail(
                ScnStatus::Config,
                format!(
                    "model expects {} features, dataset has {}",
                    m.model.features(),
                    ds.graphs[0].feature_dim()
                ),
            ));
        }
        let out = std::slice::from_raw_parts_mut(labels, n);
        let idx: Vec<usize> = (0..n).collect();
        let mut pos = 0;
        for b in lift(make_batches(&ds.graphs, &idx, EVAL_BATCH))? {
            for p in lift(m.model.predict(&b))? {
                out[pos] = p;
                pos += 1;
            }
        }
        Ok(())
    })
}
