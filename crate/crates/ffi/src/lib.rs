//! C ABI for dxq.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free`. Every fallible call returns a [`DxqStatus`]; on
//! failure the message is kept per thread and read back with
//! [`dxq_last_error_message`]. Strings handed out by the library are freed
//! with [`dxq_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dxq::data::{generate, partition_dataset, Dataset, PartitionScheme};
use dxq::engine::{run_query, QueryId, RunOptions, RunReport, Variant};
use dxq::perfmodel::{self, ExchangeKind};
use dxq::transport::{Cluster, Mode};
use dxq::{Error, Topology};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DxqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidTopology = 2,
    InvalidArgument = 3,
    ClusterConfig = 4,
    Deadlock = 5,
    Protocol = 6,
    Schema = 7,
    Plan = 8,
    Unsupported = 9,
    MemoryCap = 10,
    Parse = 11,
    Io = 12,
    Panic = 13,
}

impl From<&Error> for DxqStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidTopology(_) => DxqStatus::InvalidTopology,
            Error::InvalidArgument(_) => DxqStatus::InvalidArgument,
            Error::ClusterConfig(_) => DxqStatus::ClusterConfig,
            Error::Deadlock { .. } => DxqStatus::Deadlock,
            Error::Protocol(_) => DxqStatus::Protocol,
            Error::Schema(_) => DxqStatus::Schema,
            Error::Plan(_) => DxqStatus::Plan,
            Error::Unsupported(_) => DxqStatus::Unsupported,
            Error::MemoryCap { .. } => DxqStatus::MemoryCap,
            Error::Parse { .. } => DxqStatus::Parse,
            Error::Io(_) => DxqStatus::Io,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DxqMode {
    Simulated = 0,
    InProcess = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DxqExchangeKind {
    Broadcast = 0,
    Shuffle = 1,
}

/// Result of [`dxq_choose_exchange`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DxqExchangeChoice {
    pub kind: DxqExchangeKind,
    pub predicted_time_broadcast: f64,
    pub predicted_time_shuffle: f64,
    pub swapped: bool,
}

pub struct DxqTopology(Topology);
pub struct DxqDataset(Dataset);
pub struct DxqReport(RunReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, turning errors and panics into a status plus a stored message.
fn guard(f: impl FnOnce() -> Result<(), (DxqStatus, String)>) -> DxqStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DxqStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside dxq".into());
            DxqStatus::Panic
        }
    }
}

fn lift(e: Error) -> (DxqStatus, String) {
    (DxqStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (DxqStatus, String) {
    (DxqStatus::NullPointer, format!("{what} is null"))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, (DxqStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (DxqStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DxqStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (DxqStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn dxq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, lowercase name of a status (`"ok"`, `"memory_cap"`, ...).
#[no_mangle]
pub extern "C" fn dxq_status_name(status: DxqStatus) -> *const c_char {
    let s: &'static CStr = match status {
        DxqStatus::Ok => c"ok",
        DxqStatus::NullPointer => c"null_pointer",
        DxqStatus::InvalidTopology => c"invalid_topology",
        DxqStatus::InvalidArgument => c"invalid_argument",
        DxqStatus::ClusterConfig => c"cluster_config",
        DxqStatus::Deadlock => c"deadlock",
        DxqStatus::Protocol => c"protocol",
        DxqStatus::Schema => c"schema",
        DxqStatus::Plan => c"plan",
        DxqStatus::Unsupported => c"unsupported",
        DxqStatus::MemoryCap => c"memory_cap",
        DxqStatus::Parse => c"parse",
        DxqStatus::Io => c"io",
        DxqStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn dxq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `k` GPUs on each of `v` machines. Bandwidths in GB/s; `efficiency` scales
/// both of them.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn dxq_topology_new(
    k: usize,
    v: usize,
    bg_gbps: f64,
    bn_gbps: f64,
    efficiency: f64,
    out_topo: *mut *mut DxqTopology,
) -> DxqStatus {
    guard(|| {
        let slot = out(out_topo, "out_topo")?;
        let t = Topology::new(k, v, bg_gbps, bn_gbps)
            .and_then(|t| t.with_efficiency(efficiency))
            .map_err(lift)?;
        *slot = Box::into_raw(Box::new(DxqTopology(t)));
        Ok(())
    })
}

/// # Safety
/// `topo` must be null or a handle from [`dxq_topology_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn dxq_topology_free(topo: *mut DxqTopology) {
    if !topo.is_null() {
        drop(Box::from_raw(topo));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dxq_broadcast_throughput(topo: *const DxqTopology, out_gbps: *mut f64) -> DxqStatus {
    guard(|| {
        let t = get(topo, "topo")?;
        *out(out_gbps, "out_gbps")? = perfmodel::broadcast_throughput(&t.0);
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dxq_shuffle_throughput(topo: *const DxqTopology, out_gbps: *mut f64) -> DxqStatus {
    guard(|| {
        let t = get(topo, "topo")?;
        *out(out_gbps, "out_gbps")? = perfmodel::shuffle_throughput(&t.0);
        Ok(())
    })
}

/// Seconds to broadcast a table of `bytes`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dxq_broadcast_time(topo: *const DxqTopology, bytes: f64, out_s: *mut f64) -> DxqStatus {
    guard(|| {
        let t = get(topo, "topo")?;
        *out(out_s, "out_s")? = perfmodel::broadcast_time(&t.0, bytes).map_err(lift)?;
        Ok(())
    })
}

/// Seconds to shuffle `bytes` in total.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dxq_shuffle_time(topo: *const DxqTopology, bytes: f64, out_s: *mut f64) -> DxqStatus {
    guard(|| {
        let t = get(topo, "topo")?;
        *out(out_s, "out_s")? = perfmodel::shuffle_time(&t.0, bytes).map_err(lift)?;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dxq_choose_exchange(
    topo: *const DxqTopology,
    small_bytes: f64,
    large_bytes: f64,
    out_choice: *mut DxqExchangeChoice,
) -> DxqStatus {
    guard(|| {
        let t = get(topo, "topo")?;
        let slot = out(out_choice, "out_choice")?;
        let c = perfmodel::choose_exchange(&t.0, small_bytes, large_bytes).map_err(lift)?;
        *slot = DxqExchangeChoice {
            kind: match c.kind {
                ExchangeKind::Broadcast => DxqExchangeKind::Broadcast,
                ExchangeKind::Shuffle => DxqExchangeKind::Shuffle,
            },
            predicted_time_broadcast: c.predicted_time_broadcast,
            predicted_time_shuffle: c.predicted_time_shuffle,
            swapped: c.swapped,
        };
        Ok(())
    })
}

/// Synthetic TPC-H-style data at scale factor `sf`; `skew` 0 is uniform.
///
/// # Safety
/// `out_ds` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dxq_dataset_generate(
    sf: f64,
    skew: f64,
    seed: u64,
    out_ds: *mut *mut DxqDataset,
) -> DxqStatus {
    guard(|| {
        let slot = out(out_ds, "out_ds")?;
        let ds = generate(sf, skew, seed).map_err(lift)?;
        *slot = Box::into_raw(Box::new(DxqDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from [`dxq_dataset_generate`], freed once.
#[no_mangle]
pub unsafe extern "C" fn dxq_dataset_free(ds: *mut DxqDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// Pointers must be valid; `table` is a NUL-terminated name like `"lineitem"`.
#[no_mangle]
pub unsafe extern "C" fn dxq_dataset_num_rows(
    ds: *const DxqDataset,
    table: *const c_char,
    out_rows: *mut u64,
) -> DxqStatus {
    guard(|| {
        let d = get(ds, "ds")?;
        let name = text(table, "table")?;
        *out(out_rows, "out_rows")? = d.0.table(name).map_err(lift)?.num_rows() as u64;
        Ok(())
    })
}

/// Runs one query on a fresh cluster. `variant` is `"default"`, `"pa"` or
/// `"pb"`; the data is partitioned on join keys for the default plan and
/// left unpartitioned otherwise.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dxq_run_query(
    topo: *const DxqTopology,
    ds: *const DxqDataset,
    query: *const c_char,
    variant: *const c_char,
    mode: DxqMode,
    out_report: *mut *mut DxqReport,
) -> DxqStatus {
    guard(|| {
        let t = &get(topo, "topo")?.0;
        let d = &get(ds, "ds")?.0;
        let q: QueryId = text(query, "query")?.parse().map_err(lift)?;
        let v: Variant = text(variant, "variant")?.parse().map_err(lift)?;
        let slot = out(out_report, "out_report")?;
        let scheme = match v {
            Variant::Default => PartitionScheme::DefaultKeys,
            Variant::Pa | Variant::Pb => PartitionScheme::Unpartitioned,
        };
        let mode = match mode {
            DxqMode::Simulated => Mode::Simulated,
            DxqMode::InProcess => Mode::InProcess,
        };
        let parts = partition_dataset(d, t.n(), scheme).map_err(lift)?;
        let mut cluster = Cluster::new(t, mode, 0).map_err(lift)?;
        let (_, report) = run_query(q, v, &mut cluster, &parts, &RunOptions::default()).map_err(lift)?;
        *slot = Box::into_raw(Box::new(DxqReport(report)));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from [`dxq_run_query`], freed once.
#[no_mangle]
pub unsafe extern "C" fn dxq_report_free(report: *mut DxqReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Time breakdown in seconds. Any out pointer may be null.
///
/// # Safety
/// `report` must be valid; non-null out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn dxq_report_times(
    report: *const DxqReport,
    out_compute_s: *mut f64,
    out_shuffle_s: *mut f64,
    out_broadcast_s: *mut f64,
) -> DxqStatus {
    guard(|| {
        let r = &get(report, "report")?.0;
        for (p, v) in [
            (out_compute_s, r.compute_s),
            (out_shuffle_s, r.shuffle_s),
            (out_broadcast_s, r.broadcast_s),
        ] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dxq_report_exchange_counts(
    report: *const DxqReport,
    out_shuffles: *mut u32,
    out_broadcasts: *mut u32,
) -> DxqStatus {
    guard(|| {
        let r = &get(report, "report")?.0;
        *out(out_shuffles, "out_shuffles")? = r.exchange_counts.0;
        *out(out_broadcasts, "out_broadcasts")? = r.exchange_counts.1;
        Ok(())
    })
}

/// The full report as JSON; free with [`dxq_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dxq_report_json(report: *const DxqReport, out_json: *mut *mut c_char) -> DxqStatus {
    guard(|| {
        let r = &get(report, "report")?.0;
        let slot = out(out_json, "out_json")?;
        let s = serde_json::to_string(r).map_err(|e| lift(e.into()))?;
        *slot = CString::new(s).map_err(|e| (DxqStatus::Io, e.to_string()))?.into_raw();
        Ok(())
    })
}
